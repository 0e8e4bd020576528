//! Fixed-step third-order Runge–Kutta (Kutta's scheme).

/// One RK3 step of size `h` for `y' = f(y)` on `N`-vectors.
pub fn rk3_step<const N: usize, F>(f: &mut F, y: &[f64; N], h: f64) -> [f64; N]
where
    F: FnMut(&[f64; N]) -> [f64; N],
{
    let k1 = f(y);
    let mut y2 = [0.0; N];
    for i in 0..N {
        y2[i] = y[i] + 0.5 * h * k1[i];
    }
    let k2 = f(&y2);
    let mut y3 = [0.0; N];
    for i in 0..N {
        y3[i] = y[i] - h * k1[i] + 2.0 * h * k2[i];
    }
    let k3 = f(&y3);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = y[i] + h / 6.0 * (k1[i] + 4.0 * k2[i] + k3[i]);
    }
    out
}

/// Integrate `steps` equal steps over `[0, t_end]`, returning all nodes.
pub fn rk3_integrate<const N: usize, F>(mut f: F, y0: [f64; N], t_end: f64, steps: usize) -> Vec<[f64; N]>
where
    F: FnMut(&[f64; N]) -> [f64; N],
{
    let h = t_end / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0);
    let mut y = y0;
    for _ in 0..steps {
        y = rk3_step(&mut f, &y, h);
        out.push(y);
    }
    out
}

/// RK3 step for a fallible, time-dependent right-hand side `f(t, y)`.
pub fn rk3_step_try<const N: usize, E, F>(f: &mut F, t: f64, y: &[f64; N], h: f64) -> Result<[f64; N], E>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
{
    let k1 = f(t, y)?;
    let mut y2 = [0.0; N];
    for i in 0..N {
        y2[i] = y[i] + 0.5 * h * k1[i];
    }
    let k2 = f(t + 0.5 * h, &y2)?;
    let mut y3 = [0.0; N];
    for i in 0..N {
        y3[i] = y[i] - h * k1[i] + 2.0 * h * k2[i];
    }
    let k3 = f(t + h, &y3)?;
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = y[i] + h / 6.0 * (k1[i] + 4.0 * k2[i] + k3[i]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_order_convergence_on_exponential() {
        let err = |n: usize| {
            let y = rk3_integrate(|y: &[f64; 1]| [-y[0]], [1.0], 2.0, n);
            (y[n][0] - (-2.0f64).exp()).abs()
        };
        let order = (err(40) / err(80)).log2();
        assert!((order - 3.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn exact_for_quadratic_in_time() {
        // y = (t, t^2/2 * 3)
        let y = rk3_integrate(|y: &[f64; 2]| [1.0, 3.0 * y[0]], [0.0, 0.0], 1.0, 7);
        assert!((y[7][1] - 1.5).abs() < 1e-14);
    }
}
