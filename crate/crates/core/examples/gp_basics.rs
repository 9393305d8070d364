//! Building and solving a geometric program directly.
//!
//! Box design: maximize volume `hwd` subject to wall area
//! `2(hw + hd) <= 100`, floor area `wd <= 10` and aspect ratios
//! `0.5 <= h/w <= 2`, `0.5 <= d/w <= 2`. As a GP, minimize `1/(hwd)`.

use bucketopt::gp::{solve, SolverConfig};
use bucketopt::posy::{GpProblem, Monomial, Posynomial};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (h, w, d) = (Monomial::var("h"), Monomial::var("w"), Monomial::var("d"));
    let wall = Posynomial::new(vec![h.mul(&w).scale(2.0 / 100.0)?, h.mul(&d).scale(2.0 / 100.0)?])?;
    let floor = w.mul(&d).scale(0.1)?;
    let ratios = [
        h.mul(&w.recip()).scale(0.5)?,
        w.mul(&h.recip()).scale(0.5)?,
        d.mul(&w.recip()).scale(0.5)?,
        w.mul(&d.recip()).scale(0.5)?,
    ];
    let mut ineq = vec![wall, floor.into()];
    ineq.extend(ratios.into_iter().map(Posynomial::from));
    let gp = GpProblem::new(h.mul(&w).mul(&d).recip().into(), ineq, vec![]);
    println!("minimize {}", gp.objective);
    for c in &gp.ineq {
        println!("  s.t. {c} <= 1");
    }

    let out = solve(&gp, &SolverConfig::default())?;
    println!("status {:?}, volume {:.6}, gap bound {:.1e}", out.status, 1.0 / out.objective, out.gap);
    for v in ["h", "w", "d"] {
        println!("  {v} = {:.6}", out.value(v));
    }
    println!("barrier iterations:");
    for row in &out.trace {
        println!("  {:>3} objective {:.8} gap {:.2e}", row.iter, row.objective, row.residual);
    }
    Ok(())
}
