/// Max over coordinates of |central difference − analytic gradient| at `x`.
///
/// The central difference along axis `i` is `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
pub fn finite_difference_check<F, G>(f: F, analytic_grad: G, x: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let grad = analytic_grad(x);
    assert_eq!(grad.len(), x.len(), "gradient length must match input length");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((numeric - grad[i]).abs());
    }
    worst
}
