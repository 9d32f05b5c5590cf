use super::{Mode, Tensor4};

/// Elementwise activations. Train-mode forwards cache what backward needs.
#[derive(Clone, Debug)]
pub enum Activation {
    LeakyRelu { slope: f64, cache: Option<Tensor4> },
    Relu { cache: Option<Tensor4> },
    Tanh { cache: Option<Tensor4> },
}

impl Activation {
    pub fn leaky_relu(slope: f64) -> Self {
        Activation::LeakyRelu { slope, cache: None }
    }

    pub fn relu() -> Self {
        Activation::Relu { cache: None }
    }

    pub fn tanh() -> Self {
        Activation::Tanh { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor4, mode: Mode) -> Tensor4 {
        match self {
            Activation::LeakyRelu { slope, cache } => {
                let s = *slope;
                let out = Tensor4 {
                    data: x
                        .data
                        .iter()
                        .map(|&v| if v >= 0.0 { v } else { s * v })
                        .collect(),
                    ..x.clone()
                };
                if mode == Mode::Train {
                    *cache = Some(x.clone());
                }
                out
            }
            Activation::Relu { cache } => {
                let out = Tensor4 {
                    data: x.data.iter().map(|&v| v.max(0.0)).collect(),
                    ..x.clone()
                };
                if mode == Mode::Train {
                    *cache = Some(x.clone());
                }
                out
            }
            Activation::Tanh { cache } => {
                let out = Tensor4 {
                    data: x.data.iter().map(|&v| libm::tanh(v)).collect(),
                    ..x.clone()
                };
                if mode == Mode::Train {
                    // tanh backward only needs the output
                    *cache = Some(out.clone());
                }
                out
            }
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Tensor4 {
        match self {
            Activation::LeakyRelu { slope, cache } => {
                let x = cache.take().expect("backward without forward");
                let s = *slope;
                Tensor4 {
                    data: grad_out
                        .data
                        .iter()
                        .zip(&x.data)
                        .map(|(&g, &v)| if v >= 0.0 { g } else { s * g })
                        .collect(),
                    ..x
                }
            }
            Activation::Relu { cache } => {
                let x = cache.take().expect("backward without forward");
                Tensor4 {
                    data: grad_out
                        .data
                        .iter()
                        .zip(&x.data)
                        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                        .collect(),
                    ..x
                }
            }
            Activation::Tanh { cache } => {
                let y = cache.take().expect("backward without forward");
                Tensor4 {
                    data: grad_out
                        .data
                        .iter()
                        .zip(&y.data)
                        .map(|(&g, &t)| g * (1.0 - t * t))
                        .collect(),
                    ..y
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn leaky_relu_values_and_grad() {
        let mut a = Activation::leaky_relu(0.2);
        let x = Tensor4::from_data(1, 1, 3, 1, vec![-2.0, 0.0, 3.0]);
        let y = a.forward(&x, Mode::Train);
        assert_eq!(y.data, vec![-0.4, 0.0, 3.0]);
        let g = a.backward(&Tensor4::from_data(1, 1, 3, 1, vec![1.0, 1.0, 1.0]));
        assert_eq!(g.data, vec![0.2, 1.0, 1.0]);
    }

    #[test]
    fn tanh_saturates_and_grad_uses_output() {
        let mut a = Activation::tanh();
        let x = Tensor4::from_data(1, 1, 2, 1, vec![0.0, 100.0]);
        let y = a.forward(&x, Mode::Train);
        assert_eq!(y.data[0], 0.0);
        assert!((y.data[1] - 1.0).abs() < 1e-12);
        let g = a.backward(&Tensor4::from_data(1, 1, 2, 1, vec![1.0, 1.0]));
        assert_eq!(g.data[0], 1.0);
        assert!(g.data[1].abs() < 1e-12);
    }

    #[test]
    fn relu_grad_zero_at_negative() {
        let mut a = Activation::relu();
        let x = Tensor4::from_data(1, 1, 2, 1, vec![-1.0, 2.0]);
        a.forward(&x, Mode::Train);
        let g = a.backward(&Tensor4::from_data(1, 1, 2, 1, vec![5.0, 5.0]));
        assert_eq!(g.data, vec![0.0, 5.0]);
    }
}
