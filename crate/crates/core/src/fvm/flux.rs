/// Local Lax–Friedrichs flux for the linear flux `speed * u`.
#[inline]
pub fn llf_flux(u_minus: f64, u_plus: f64, speed: f64) -> f64 {
    0.5 * speed * (u_minus + u_plus) - 0.5 * speed.abs() * (u_plus - u_minus)
}
