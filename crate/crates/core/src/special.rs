//! Special functions used by the Laguerre kernels.
//!
//! Everything that can overflow in double precision (Gamma ratios, the
//! exponentially growing Bessel function, gaussian factors of the Laguerre
//! functions) is assembled as a sum of logarithms and exponentiated once.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Tolerance used to decide whether `mu` sits at the extreme value `-(alpha+1)`.
pub const EXTREME_TOL: f64 = 1e-12;

const LN_SQRT_2: f64 = 0.5 * LN_2;

/// Fixed analytic parameters of the operator `L = -d²/dy² + y² + (α²-1/4)/y² + 2μ`
/// and of the subordination exponent `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupParams {
    alpha: f64,
    mu: f64,
    nu: f64,
}

impl SemigroupParams {
    pub fn new(alpha: f64, mu: f64, nu: f64) -> Result<Self> {
        if !(alpha > -1.0) || !alpha.is_finite() {
            return domain(format!("alpha must exceed -1, got {alpha}"));
        }
        if !mu.is_finite() || mu < -(alpha + 1.0) - EXTREME_TOL {
            return domain(format!("mu must be at least -(alpha+1) = {}, got {mu}", -(alpha + 1.0)));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return domain(format!("nu must be positive, got {nu}"));
        }
        // snap to the extreme value so that the eigenvalue lambda_0 is exactly zero
        let mu = if (mu + alpha + 1.0).abs() <= EXTREME_TOL { -(alpha + 1.0) } else { mu };
        Ok(Self { alpha, mu, nu })
    }

    /// Parametrization of the classical Laguerre operator `-y∂² - (α+1-y)∂ + m`,
    /// related to `mu` through `m = (α+1+μ)/2`.
    pub fn from_m(alpha: f64, m: f64, nu: f64) -> Result<Self> {
        if !(m >= 0.0) {
            return domain(format!("m must be non-negative, got {m}"));
        }
        Self::new(alpha, 2.0 * m - alpha - 1.0, nu)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn m(&self) -> f64 {
        0.5 * (self.alpha + 1.0 + self.mu)
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(self.alpha, self.mu, nu)
    }

    pub fn extreme_case(&self) -> bool {
        (self.mu + self.alpha + 1.0).abs() <= EXTREME_TOL
    }

    /// `λ_n = 4n + 2(α+1+μ)`.
    pub fn eigenvalue(&self, n: usize) -> f64 {
        4.0 * n as f64 + 2.0 * (self.alpha + 1.0 + self.mu)
    }

    /// Power of `log(e+y)` in the denominator of the decay weight.
    pub fn log_power(&self) -> f64 {
        if self.extreme_case() {
            self.nu
        } else {
            1.0 + self.nu
        }
    }
}

/// `⟨z⟩ = min{z, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AngleBracket(f64);

impl AngleBracket {
    pub fn of(z: f64) -> Self {
        Self(z.min(1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[inline]
pub fn angle(z: f64) -> f64 {
    z.min(1.0)
}

/// `ln Γ(x)` for `x > 0`.
///
/// Backed by the musl-derived `lgamma_r` of the `libm` crate, which is accurate to a
/// few ulps over the whole positive axis, including the zeros at 1 and 2.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("log_gamma needs a positive finite argument, got {x}"));
    }
    Ok(lgamma(x))
}

#[inline]
pub(crate) fn lgamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// Below this argument `e^{-z} I_α(z)` is summed from the power series, above it the
/// large-argument expansion is used.
pub fn bessel_crossover(alpha: f64) -> f64 {
    (2.0 * alpha * alpha).max(20.0)
}

/// `ln(e^{-z} I_α(z))` from the ascending series, given both `z` and `ln z`
/// (the latter stays finite when `z` underflows).
fn ln_bessel_series(alpha: f64, z: f64, ln_z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut offset = 0.0_f64;
    let half_z = 0.5 * z;
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        term *= q / ((kf + 1.0) * (kf + alpha + 1.0));
        sum += term;
        k += 1;
        if sum > 1e250 {
            sum *= 1e-250;
            term *= 1e-250;
            offset += 250.0 * std::f64::consts::LN_10;
        }
        if (kf > half_z && term < 1e-17 * sum) || k > 100_000 {
            break;
        }
    }
    alpha * (ln_z - LN_2) - lgamma(alpha + 1.0) - z + sum.ln() + offset
}

/// `ln(e^{-z} I_α(z))` from the large-argument expansion
/// `(2πz)^{-1/2} Σ (-1)^k a_k(α) z^{-k}`.
fn ln_bessel_asymptotic(alpha: f64, z: f64) -> f64 {
    let mu4 = 4.0 * alpha * alpha;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut prev = f64::INFINITY;
    for k in 1..400 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu4 - odd * odd) / (8.0 * k as f64 * z);
        if next.abs() >= prev {
            break;
        }
        sum += next;
        if next.abs() <= 1e-17 * sum.abs() {
            break;
        }
        prev = next.abs();
        term = next;
    }
    -0.5 * (2.0 * PI * z).ln() + sum.ln()
}

/// `ln(e^{-z} I_α(z))` for `z > 0` given as `(z, ln z)`.
pub(crate) fn ln_bessel_scaled_parts(alpha: f64, z: f64, ln_z: f64) -> f64 {
    if z <= bessel_crossover(alpha) {
        ln_bessel_series(alpha, z, ln_z)
    } else {
        ln_bessel_asymptotic(alpha, z)
    }
}

fn check_order(alpha: f64) -> Result<()> {
    if !(alpha > -1.0) || !alpha.is_finite() {
        return domain(format!("Bessel order must exceed -1, got {alpha}"));
    }
    Ok(())
}

/// `ln(e^{-z} I_α(z))`; `-∞` at `z = 0` when `α > 0`.
pub fn ln_bessel_i_scaled(alpha: f64, z: f64) -> Result<f64> {
    check_order(alpha)?;
    if !(z >= 0.0) || !z.is_finite() {
        return domain(format!("Bessel argument must be non-negative and finite, got {z}"));
    }
    if z == 0.0 {
        return if alpha == 0.0 {
            Ok(0.0)
        } else if alpha > 0.0 {
            Ok(f64::NEG_INFINITY)
        } else {
            Err(Error::Range(format!("I_{alpha}(0) is infinite")))
        };
    }
    Ok(ln_bessel_scaled_parts(alpha, z, z.ln()))
}

/// `e^{-z} I_α(z)`, finite for every `z ≥ 0` when `α ≥ 0`.
pub fn bessel_i_scaled(alpha: f64, z: f64) -> Result<f64> {
    ln_bessel_i_scaled(alpha, z).map(f64::exp)
}

/// `ln bI_α(z)` with `bI_α(z) = √z e^{-z} I_α(z)`, from `(z, ln z)`.
#[inline]
pub(crate) fn ln_bi_parts(alpha: f64, z: f64, ln_z: f64) -> f64 {
    0.5 * ln_z + ln_bessel_scaled_parts(alpha, z, ln_z)
}

/// `bI_α(z) = √z e^{-z} I_α(z)`, comparable to `⟨z⟩^{α+1/2}`.
///
/// At `z = 0` the limit is returned for `α ≥ -1/2`; for `α < -1/2` it diverges and a
/// range error is reported.
pub fn bi(alpha: f64, z: f64) -> Result<f64> {
    check_order(alpha)?;
    if !(z >= 0.0) || !z.is_finite() {
        return domain(format!("bI argument must be non-negative and finite, got {z}"));
    }
    if z == 0.0 {
        let e = alpha + 0.5;
        return if e.abs() <= EXTREME_TOL {
            Ok((2.0 / PI).sqrt())
        } else if e > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Range(format!("bI_{alpha}(z) diverges as z -> 0")))
        };
    }
    Ok(ln_bi_parts(alpha, z, z.ln()).exp())
}

/// Sign and logarithm of `|L_n^α(x)|` for the orthonormal Laguerre polynomials,
/// `n = 0..=n_max`.
///
/// The three-term recurrence is run directly on the normalized polynomials
/// `L_n^α / √(Γ(n+α+1)/n!)`, carrying a common logarithmic scale so that large
/// arguments do not overflow.
pub(crate) fn laguerre_log_normalized(alpha: f64, n_max: usize, x: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut scale = -0.5 * lgamma(alpha + 1.0);
    let mut prev = 0.0_f64;
    let mut cur = 1.0_f64;
    out.push((1.0, scale));
    for n in 0..n_max {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0 + alpha - x) * cur - (nf * (nf + alpha)).sqrt() * prev)
            / ((nf + 1.0) * (nf + alpha + 1.0)).sqrt();
        prev = cur;
        cur = next;
        let mag = cur.abs();
        if mag > 1e150 || (mag < 1e-150 && mag > 0.0 && prev.abs() < 1e-150) {
            let shift = mag.ln();
            prev /= mag;
            cur /= mag;
            scale += shift;
        }
        out.push((cur.signum(), cur.abs().ln() + scale));
    }
    out
}

/// Orthonormal Laguerre polynomials `L_0^α(x) … L_{n_max}^α(x)` with respect to
/// `x^α e^{-x} dx` on `(0, ∞)`.
pub fn laguerre_normalized(alpha: f64, n_max: usize, x: f64) -> Result<Vec<f64>> {
    check_order(alpha)?;
    if !(x >= 0.0) || !x.is_finite() {
        return domain(format!("Laguerre argument must be non-negative and finite, got {x}"));
    }
    Ok(laguerre_log_normalized(alpha, n_max, x)
        .into_iter()
        .map(|(s, l)| if s == 0.0 { 0.0 } else { s * l.exp() })
        .collect())
}

/// `φ_n(y) = √2 y^{α+1/2} e^{-y²/2} L_n^α(y²)` for `n = 0..=n_max`.
pub fn eigenfunctions(alpha: f64, n_max: usize, y: f64) -> Result<Vec<f64>> {
    check_order(alpha)?;
    if !(y > 0.0) || !y.is_finite() {
        return domain(format!("Laguerre functions are evaluated at y > 0 only, got {y}"));
    }
    let base = LN_SQRT_2 + (alpha + 0.5) * y.ln() - 0.5 * y * y;
    Ok(laguerre_log_normalized(alpha, n_max, y * y)
        .into_iter()
        .map(|(s, l)| if s == 0.0 { 0.0 } else { s * (base + l).exp() })
        .collect())
}

/// The Laguerre function `φ_n^α(y)`, an orthonormal eigenfunction of `L` with
/// eigenvalue `params.eigenvalue(n)`.
pub fn eigenfunction_phi(params: &SemigroupParams, n: usize, y: f64) -> Result<f64> {
    eigenfunctions(params.alpha(), n, y).map(|v| v[n])
}

/// `ln φ_0(y)`; `φ_0` is strictly positive.
pub fn ln_phi0(alpha: f64, y: f64) -> f64 {
    LN_SQRT_2 + (alpha + 0.5) * y.ln() - 0.5 * y * y - 0.5 * lgamma(alpha + 1.0)
}

/// `ln(e^a + e^b)` without overflow.
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn params_validation() {
        assert!(SemigroupParams::new(-1.0, 0.0, 0.5).is_err());
        assert!(SemigroupParams::new(0.0, -1.5, 0.5).is_err());
        assert!(SemigroupParams::new(0.0, 0.0, 0.0).is_err());
        let p = SemigroupParams::new(1.5, -2.5, 0.5).unwrap();
        assert!(p.extreme_case());
        assert_eq!(p.eigenvalue(0), 0.0);
        assert_eq!(p.log_power(), 0.5);
        let q = SemigroupParams::from_m(0.0, 0.5, 1.0).unwrap();
        assert_eq!(q.mu(), 0.0);
        assert_eq!(q.eigenvalue(0), 2.0);
    }

    #[test]
    fn eigenvalues_increase() {
        let p = SemigroupParams::new(-0.75, 0.5, 1.0).unwrap();
        for n in 0..50 {
            assert!(p.eigenvalue(n + 1) > p.eigenvalue(n));
            assert!(p.eigenvalue(n) > 0.0);
        }
    }

    #[test]
    fn log_gamma_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-15);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-15);
        assert!(rel(log_gamma(0.5).unwrap(), 0.5723649429247000870717136756765293558236) < 1e-14);
        assert!(rel(log_gamma(7.3).unwrap(), 7.147892523022249032777057154428389202453) < 1e-13);
        assert!(rel(log_gamma(0.25).unwrap(), 1.288022524698077457370610440219717295925) < 1e-13);
        assert!(rel(log_gamma(1e-3).unwrap(), 6.90717888538385368251234466807698250216) < 1e-13);
        assert!(rel(log_gamma(170.5).unwrap(), 704.0044277342046707917900288362859176897) < 1e-13);
        assert!(matches!(log_gamma(0.0), Err(Error::Domain(_))));
        assert!(log_gamma(-2.5).is_err());
    }

    #[test]
    fn bessel_scaled_reference_values() {
        // high-precision reference values of e^{-z} I_α(z)
        let cases = [
            (0.7, 12.0, 0.1139669629544700671625677310200540720259),
            (0.0, 0.5, 0.6450352704491500681079966297459957271969),
            (-0.75, 3.0, 0.2160054140892478712791385224616807765577),
            (1.5, 25.0, 0.07659691783707507416448564827254486809961),
            (-0.5, 1.0, 0.4529332469146207298905102603450954502157),
            (0.3, 9.99, 0.1272918629570109841412960384715179183414),
            (0.3, 20.01, 0.08955062776233804388982273991361304176066),
            (12.0, 200.0, 0.01967776349527564523111253170038751159925),
            (12.0, 300.0, 0.01811922858451045292585174483276074079541),
            (-0.9, 1e-5, 6202.717177684281907757104457342801527313),
            (2.5, 40.0, 0.05846571140868589611797691783856733147399),
        ];
        for (a, z, want) in cases {
            let got = bessel_i_scaled(a, z).unwrap();
            assert!(rel(got, want) < 1e-10, "alpha={a} z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn bessel_closed_forms() {
        assert_eq!(bessel_i_scaled(0.0, 0.0).unwrap(), 1.0);
        let z: f64 = 1.0;
        let want = (2.0 / (PI * z)).sqrt() * (-z).exp() * z.cosh();
        assert!(rel(bessel_i_scaled(-0.5, z).unwrap(), want) < 1e-13);
        for z in [0.1, 2.0, 7.5, 19.0, 21.0, 60.0] {
            let want = (2.0 / (PI * z)).sqrt() * 0.5 * (1.0 - (-2.0 * z).exp());
            assert!(rel(bessel_i_scaled(0.5, z).unwrap(), want) < 1e-12, "z={z}");
        }
    }

    #[test]
    fn bessel_seam_is_continuous() {
        for alpha in [-0.9, -0.5, 0.0, 0.3, 1.5, 4.0, 12.0] {
            let zc = bessel_crossover(alpha);
            let s = ln_bessel_series(alpha, zc, zc.ln());
            let a = ln_bessel_asymptotic(alpha, zc);
            assert!((s - a).abs() < 1e-9, "alpha={alpha}: series {s} asymptotic {a}");
        }
    }

    #[test]
    fn bessel_errors() {
        assert!(matches!(bessel_i_scaled(0.5, -1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_i_scaled(-0.3, 0.0), Err(Error::Range(_))));
        assert!(bessel_i_scaled(-1.0, 1.0).is_err());
        assert_eq!(bessel_i_scaled(2.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn bi_limits() {
        assert!(rel(bi(-0.5, 0.0).unwrap(), 0.79788456080286535588) < 1e-15);
        assert_eq!(bi(0.0, 0.0).unwrap(), 0.0);
        assert!(bi(-0.75, 0.0).is_err());
        let want = 3f64.sqrt() * (-3f64).exp() * (2.0 / (3.0 * PI)).sqrt() * 3f64.sinh();
        assert!(rel(bi(0.5, 3.0).unwrap(), want) < 1e-13);
        // approaches the z -> 0 limit continuously
        assert!(rel(bi(-0.5, 1e-12).unwrap(), (2.0 / PI).sqrt()) < 1e-9);
    }

    #[test]
    fn bi_envelope_is_bounded() {
        for alpha in [-0.75, -0.5, 0.0, 1.5] {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0_f64;
            for i in 0..=180 {
                let z = 10f64.powf(-6.0 + 9.0 * i as f64 / 180.0);
                let r = bi(alpha, z).unwrap() / angle(z).powf(alpha + 0.5);
                lo = lo.min(r);
                hi = hi.max(r);
            }
            assert!(lo > 0.1 && hi < 2.0 && lo.is_finite(), "alpha={alpha} [{lo},{hi}]");
        }
    }

    #[test]
    fn laguerre_basic() {
        let a = 0.3;
        for x in [0.0, 1.0, 17.0] {
            let v = laguerre_normalized(a, 0, x).unwrap();
            assert!(rel(v[0], 1.0 / lgamma(a + 1.0).exp().sqrt()) < 1e-14);
        }
        let v = laguerre_normalized(0.0, 1, 0.0).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn laguerre_reference_values() {
        // normalized Laguerre values from a 40-digit evaluation
        let cases: [(f64, usize, f64, f64); 12] = [
            (-0.75, 5, 10.0, 54.15831084141488259658437433667372766146),
            (-0.75, 13, 50.0, -48991792514.22537204202584455353362981342),
            (-0.75, 20, 0.5, 0.2803454332901708791500291100830083870708),
            (-0.75, 20, 50.0, 39703101236.86509130628782693328831955672),
            (0.0, 13, 10.0, -24.84612917946251279584612917946251279585),
            (0.0, 20, 10.0, -11.96133386781211863161472114865037986203),
            (0.0, 20, 50.0, 7551960453.767253534604009556823690924375),
            (1.5, 5, 50.0, -316923.9217130458096461105967409349802146),
            (1.5, 13, 0.5, -0.5471606424868180075829378255568310920728),
            (1.5, 20, 0.5, -0.6345735347152031590402785004373258981643),
            (1.5, 20, 10.0, 3.80707836956964645648675668732032099784),
            (1.5, 20, 50.0, -17142407.50077560389730145922660113984229),
        ];
        for (a, n, x, want) in cases {
            let got = laguerre_normalized(a, n, x).unwrap()[n];
            assert!(rel(got, want) < 1e-8, "alpha={a} n={n} x={x}: {got} vs {want}");
        }
        let want = [
            0.8673250705840775183190308265899921796161,
            0.1097089077924796441559740840597860751748,
            -0.4271005160374854521888686578489388707433,
            -0.5672159981141926814655785610166022566147,
            -0.4152023590813776350232787379240014571376,
            -0.1305378929078048215773131577202324965350,
        ];
        let got = laguerre_normalized(1.5, 5, 2.3).unwrap();
        for (g, w) in got.iter().zip(want) {
            assert!(rel(*g, w) < 1e-12);
        }
    }

    #[test]
    fn eigenfunction_values() {
        let p = SemigroupParams::new(0.0, 0.0, 0.5).unwrap();
        let v = eigenfunction_phi(&p, 0, 1.0).unwrap();
        assert!(rel(v, 2f64.sqrt() * (-0.5f64).exp()) < 1e-14);
        assert!((v - 0.85776).abs() < 1e-5);
        assert!(eigenfunction_phi(&p, 0, 0.0).is_err());
        // far tail stays finite
        for n in [0, 7, 40] {
            let v = eigenfunction_phi(&p, n, 50.0).unwrap();
            assert!(v.is_finite());
        }
        assert!(rel(ln_phi0(0.0, 1.0).exp(), v) < 1e-14);
    }

    #[test]
    fn log_add_behaves() {
        assert!((log_add(0.0, 0.0) - LN_2).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((log_add(1000.0, 1000.0) - (1000.0 + LN_2)).abs() < 1e-12);
    }
}
