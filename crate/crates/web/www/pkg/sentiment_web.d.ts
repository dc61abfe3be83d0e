/* tslint:disable */
/* eslint-disable */

/**
 * Applies crop → rotate → optional flip to canvas RGBA pixels and returns
 * RGBA at the input size, the way batches are resized to the model input.
 */
export function augment_preview(width: number, height: number, rgba: Uint8Array, crop_fraction: number, offset_x: number, offset_y: number, degrees: number, flip: boolean): Uint8Array;

/**
 * Upsamples a pasted `image_path,labels` manifest and reports per-label
 * counts before and after.
 */
export function balance_preview(task: string, manifest_csv: string, max_replication_factor: number, seed: bigint): string;

/**
 * Weighted F1 across a threshold grid on seeded synthetic scores for a
 * multi-label task.
 */
export function threshold_sweep(task: string, records: number, noise: number, step: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly augment_preview: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
    readonly balance_preview: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly threshold_sweep: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
