use nalgebra::SVector;

/// One classical fourth-order Runge-Kutta step of `ẋ = f(x)` over `h`.
pub fn erk4_step<const N: usize, F>(f: F, x: &SVector<f64, N>, h: f64) -> SVector<f64, N>
where
    F: Fn(&SVector<f64, N>) -> SVector<f64, N>,
{
    if h == 0.0 {
        return *x;
    }
    let k1 = f(x);
    let k2 = f(&(x + k1 * (0.5 * h)));
    let k3 = f(&(x + k2 * (0.5 * h)));
    let k4 = f(&(x + k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// RK4 step of a non-autonomous field `ẋ = f(t, x)` starting at `t`.
pub fn erk4_step_t<const N: usize, F>(f: F, t: f64, x: &SVector<f64, N>, h: f64) -> SVector<f64, N>
where
    F: Fn(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    if h == 0.0 {
        return *x;
    }
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn zero_field_is_identity() {
        let x = Vector3::new(1.0, -2.0, 3.0);
        assert_eq!(erk4_step(|_| Vector3::zeros(), &x, 0.1), x);
    }

    #[test]
    fn constant_field_is_exact() {
        let x = Vector3::new(1.0, -2.0, 3.0);
        let c = Vector3::new(0.5, 0.25, -1.0);
        let h = 0.125;
        assert_eq!(erk4_step(|_| c, &x, h), x + c * h);
    }

    #[test]
    fn zero_step_returns_input() {
        let x = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(erk4_step(|v| v * 10.0, &x, 0.0), x);
    }

    #[test]
    fn linear_decay_is_fourth_order() {
        let f = |x: &SVector<f64, 1>| -x;
        let exact = (-1.0f64).exp();
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut x = SVector::<f64, 1>::new(1.0);
            for _ in 0..n {
                x = erk4_step(f, &x, h);
            }
            (x[0] - exact).abs()
        };
        let order = (err(10) / err(20)).log2();
        assert!(order > 3.9, "observed order {order}");
    }
}
