//! Scalar root finding and one-dimensional maximization.

use crate::error::{Error, Result};

/// Brent's method on a sign-changing bracket `[a, b]`.
///
/// Stops when the bracket half-width drops below `xtol + rtol |x|`.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64, rtol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut xpre, mut xcur) = (a, b);
    let (mut fpre, mut fcur) = (f(xpre)?, f(xcur)?);
    if fpre == 0.0 {
        return Ok(xpre);
    }
    if fcur == 0.0 {
        return Ok(xcur);
    }
    if fpre.signum() == fcur.signum() {
        return Err(Error::BracketFailure(format!("no sign change on [{a}, {b}]")));
    }
    let (mut xblk, mut fblk) = (0.0, 0.0);
    let (mut spre, mut scur) = (0.0, 0.0);

    for _ in 0..max_iter {
        if fpre != 0.0 && fcur != 0.0 && fpre.signum() != fcur.signum() {
            xblk = xpre;
            fblk = fpre;
            spre = xcur - xpre;
            scur = spre;
        }
        if fblk.abs() < fcur.abs() {
            xpre = xcur;
            xcur = xblk;
            xblk = xpre;
            fpre = fcur;
            fcur = fblk;
            fblk = fpre;
        }

        let tol = 0.5 * (xtol + rtol * xcur.abs());
        let sbis = 0.5 * (xblk - xcur);
        if fcur == 0.0 || sbis.abs() < tol {
            return Ok(xcur);
        }

        if spre.abs() > tol && fcur.abs() < fpre.abs() {
            let stry = if xpre == xblk {
                // secant
                -fcur * (xcur - xpre) / (fcur - fpre)
            } else {
                // inverse quadratic interpolation
                let dpre = (fpre - fcur) / (xpre - xcur);
                let dblk = (fblk - fcur) / (xblk - xcur);
                -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            };
            if 2.0 * stry.abs() < spre.abs().min(3.0 * sbis.abs() - tol) {
                spre = scur;
                scur = stry;
            } else {
                spre = sbis;
                scur = sbis;
            }
        } else {
            spre = sbis;
            scur = sbis;
        }

        xpre = xcur;
        fpre = fcur;
        if scur.abs() > tol {
            xcur += scur;
        } else {
            xcur += if sbis > 0.0 { tol } else { -tol };
        }
        fcur = f(xcur)?;
    }
    Err(Error::no_convergence("brent", max_iter))
}

/// Expands `[x0 / factor, x0 * factor]` geometrically on `(0, inf)` until
/// `f` changes sign. `f` is assumed monotone.
pub fn expand_positive_bracket<F>(
    mut f: F,
    x0: f64,
    factor: f64,
    max_expansions: usize,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f0 = f(x0)?;
    if f0 == 0.0 {
        return Ok((x0, x0));
    }
    let mut lo = x0;
    let mut hi = x0;
    for _ in 0..max_expansions {
        lo /= factor;
        hi *= factor;
        let flo = f(lo)?;
        if flo.signum() != f0.signum() {
            return Ok((lo, lo * factor));
        }
        let fhi = f(hi)?;
        if fhi.signum() != f0.signum() {
            return Ok((hi / factor, hi));
        }
    }
    Err(Error::BracketFailure(format!(
        "no sign change within [{lo:e}, {hi:e}] after {max_expansions} expansions"
    )))
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_section_max<F>(mut f: F, a: f64, b: f64, rtol: f64, max_iter: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..max_iter {
        if (b - a).abs() <= rtol * (c.abs() + d.abs()) * 0.5 {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}
