//! Seeded variable initialization.
//!
//! The CPU device in candle cannot be seeded, so new variables are drawn
//! here from a ChaCha8 stream using the same `Init` distributions that the
//! layer constructors request.

use std::sync::Mutex;

use candle_core::{DType, Device, Result, Shape, Tensor, Var};
use candle_nn::init::NormalOrUniform;
use candle_nn::var_builder::SimpleBackend;
use candle_nn::{Init, VarBuilder, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub struct SeededVarMap {
    varmap: VarMap,
    rng: Mutex<ChaCha8Rng>,
}

impl SeededVarMap {
    pub fn new(varmap: VarMap, seed: u64) -> Self {
        Self {
            varmap,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// A builder whose variables land in `varmap`.
    pub fn builder(varmap: &VarMap, seed: u64, device: &Device) -> VarBuilder<'static> {
        VarBuilder::from_backend(
            Box::new(Self::new(varmap.clone(), seed)),
            DType::F32,
            device.clone(),
        )
    }

    fn sample(&self, shape: &Shape, init: Init) -> Vec<f32> {
        let n = shape.elem_count();
        let mut rng = self.rng.lock().expect("rng lock");
        let uniform = |rng: &mut ChaCha8Rng, lo: f64, up: f64| -> Vec<f32> {
            (0..n).map(|_| rng.random_range(lo..up) as f32).collect()
        };
        let normal = |rng: &mut ChaCha8Rng, mean: f64, std: f64| -> Vec<f32> {
            let d = Normal::new(mean, std).expect("finite std");
            (0..n).map(|_| d.sample(rng) as f32).collect()
        };
        match init {
            Init::Const(c) => vec![c as f32; n],
            Init::Uniform { lo, up } => uniform(&mut rng, lo, up),
            Init::Randn { mean, stdev } => normal(&mut rng, mean, stdev),
            Init::Kaiming {
                dist,
                fan,
                non_linearity,
            } => {
                let std = non_linearity.gain() / (fan.for_shape(shape) as f64).sqrt();
                match dist {
                    NormalOrUniform::Uniform => {
                        let bound = 3f64.sqrt() * std;
                        uniform(&mut rng, -bound, bound)
                    }
                    NormalOrUniform::Normal => normal(&mut rng, 0.0, std),
                }
            }
        }
    }
}

impl SimpleBackend for SeededVarMap {
    fn get(&self, s: Shape, name: &str, h: Init, dtype: DType, dev: &Device) -> Result<Tensor> {
        let mut data = self.varmap.data().lock().expect("varmap lock");
        if let Some(var) = data.get(name) {
            let t = var.as_tensor();
            if t.shape() != &s {
                candle_core::bail!("shape mismatch for {name}: {:?} <> {:?}", t.shape(), s);
            }
            return t.to_dtype(dtype);
        }
        let values = self.sample(&s, h);
        let var = Var::from_tensor(&Tensor::from_vec(values, s, dev)?.to_dtype(dtype)?)?;
        let t = var.as_tensor().clone();
        data.insert(name.to_string(), var);
        Ok(t)
    }

    fn get_unchecked(&self, name: &str, dtype: DType, _dev: &Device) -> Result<Tensor> {
        match self.varmap.data().lock().expect("varmap lock").get(name) {
            Some(v) => v.as_tensor().to_dtype(dtype),
            None => candle_core::bail!("no variable named {name}"),
        }
    }

    fn contains_tensor(&self, name: &str) -> bool {
        self.varmap.data().lock().expect("varmap lock").contains_key(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(seed: u64) -> Vec<f32> {
        let vm = VarMap::new();
        let vb = SeededVarMap::builder(&vm, seed, &Device::Cpu);
        let w = vb
            .get_with_hints((4, 3), "w", candle_nn::init::DEFAULT_KAIMING_NORMAL)
            .unwrap();
        w.flatten_all().unwrap().to_vec1().unwrap()
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn variables_are_shared_with_the_map() {
        let vm = VarMap::new();
        let vb = SeededVarMap::builder(&vm, 0, &Device::Cpu);
        let a = vb.get_with_hints(5, "b", Init::Const(1.0)).unwrap();
        assert_eq!(a.to_vec1::<f32>().unwrap(), vec![1.0; 5]);
        assert_eq!(vm.all_vars().len(), 1);
        let again = vb.get_with_hints(5, "b", Init::Const(0.0)).unwrap();
        assert_eq!(again.to_vec1::<f32>().unwrap(), vec![1.0; 5]);
        assert!(vb.get_with_hints(4, "b", Init::Const(0.0)).is_err());
    }

    #[test]
    fn uniform_respects_bounds() {
        let vm = VarMap::new();
        let vb = SeededVarMap::builder(&vm, 9, &Device::Cpu);
        let t = vb
            .get_with_hints(1000, "u", Init::Uniform { lo: -0.25, up: 0.5 })
            .unwrap();
        let v: Vec<f32> = t.to_vec1().unwrap();
        assert!(v.iter().all(|x| (-0.25..0.5).contains(x)));
    }
}
