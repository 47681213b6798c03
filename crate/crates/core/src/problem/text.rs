//! Plain-text dump of quadratic instances, for debugging and for feeding saved instances to
//! the experiment runner. Not a stability-guaranteed format.
//!
//! ```text
//! d N
//! component <L_i>        (repeated N times, followed by d rows of A_i and one row b_i)
//! g0 none | g0 <L_0>     (the latter followed by d rows of A_0 and one row b_0)
//! h zero | h l1_penalty <mu> | h l1_ball <R> | h box   (box: followed by a lo row and a hi row)
//! ```

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use super::{CompositeProblem, NonsmoothSpec, Quadratic, SmoothComponent};
use crate::error::{NesttError, Result};

fn write_row<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    let row: Vec<String> = values.map(|v| v.to_string()).collect();
    writeln!(w, "{}", row.join(" "))?;
    Ok(())
}

fn write_quadratic<W: Write>(w: &mut W, c: &SmoothComponent) -> Result<()> {
    let SmoothComponent::Quadratic(q) = c else {
        return Err(NesttError::InvalidArgument(
            "black-box components cannot be serialized".into(),
        ));
    };
    for r in 0..q.a().nrows() {
        write_row(w, q.a().row(r).iter().copied())?;
    }
    write_row(w, q.b().iter().copied())
}

pub fn write_problem<W: Write>(problem: &CompositeProblem, mut w: W) -> Result<()> {
    writeln!(w, "{} {}", problem.dim(), problem.n())?;
    for c in problem.components() {
        writeln!(w, "component {}", c.lipschitz())?;
        write_quadratic(&mut w, c)?;
    }
    match problem.g0() {
        None => writeln!(w, "g0 none")?,
        Some(g0) => {
            writeln!(w, "g0 {}", g0.lipschitz())?;
            write_quadratic(&mut w, g0)?;
        }
    }
    match problem.h() {
        NonsmoothSpec::Zero => writeln!(w, "h zero")?,
        NonsmoothSpec::L1Penalty { mu } => writeln!(w, "h l1_penalty {mu}")?,
        NonsmoothSpec::L1Ball { radius } => writeln!(w, "h l1_ball {radius}")?,
        NonsmoothSpec::Box { lo, hi } => {
            writeln!(w, "h box")?;
            write_row(&mut w, lo.iter().copied())?;
            write_row(&mut w, hi.iter().copied())?;
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Err(self.err("unexpected end of input")),
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(l);
                    }
                }
            }
        }
    }

    fn err(&self, message: impl Into<String>) -> NesttError {
        NesttError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn number(&self, token: &str) -> Result<f64> {
        token
            .parse::<f64>()
            .map_err(|e| self.err(format!("bad number `{token}`: {e}")))
    }

    fn row(&mut self, d: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let values = line
            .split_whitespace()
            .map(|t| self.number(t))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != d {
            return Err(self.err(format!("expected {d} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn quadratic(&mut self, d: usize, lipschitz: f64) -> Result<SmoothComponent> {
        let mut a = DMatrix::zeros(d, d);
        for r in 0..d {
            for (c, v) in self.row(d)?.into_iter().enumerate() {
                a[(r, c)] = v;
            }
        }
        let b = DVector::from_vec(self.row(d)?);
        Quadratic::with_lipschitz(a, b, lipschitz).map(SmoothComponent::Quadratic)
    }
}

pub fn read_problem<R: BufRead>(r: R) -> Result<CompositeProblem> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let header = lines.next_line()?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| lines.err("header must be `d N`")))
        .collect::<Result<_>>()?;
    let [d, n] = dims[..] else {
        return Err(lines.err("header must be `d N`"));
    };

    let mut components = Vec::with_capacity(n);
    for _ in 0..n {
        let line = lines.next_line()?;
        let lipschitz = match line.split_whitespace().collect::<Vec<_>>()[..] {
            ["component", l] => lines.number(l)?,
            _ => return Err(lines.err("expected `component <L>`")),
        };
        components.push(lines.quadratic(d, lipschitz)?);
    }

    let line = lines.next_line()?;
    let g0 = match line.split_whitespace().collect::<Vec<_>>()[..] {
        ["g0", "none"] => None,
        ["g0", l] => {
            let l = lines.number(l)?;
            Some(lines.quadratic(d, l)?)
        }
        _ => return Err(lines.err("expected `g0 none` or `g0 <L>`")),
    };

    let line = lines.next_line()?;
    let h = match line.split_whitespace().collect::<Vec<_>>()[..] {
        ["h", "zero"] => NonsmoothSpec::Zero,
        ["h", "l1_penalty", mu] => NonsmoothSpec::L1Penalty { mu: lines.number(mu)? },
        ["h", "l1_ball", r] => NonsmoothSpec::L1Ball { radius: lines.number(r)? },
        ["h", "box"] => {
            let lo = DVector::from_vec(lines.row(d)?);
            let hi = DVector::from_vec(lines.row(d)?);
            NonsmoothSpec::Box { lo, hi }
        }
        _ => return Err(lines.err("unrecognized h spec")),
    };
    CompositeProblem::new(components, g0, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{synthetic_quadratic_problem, Curvature, SyntheticConfig};
    use nalgebra::dvector;

    #[test]
    fn text_round_trip_is_exact() {
        for h in [
            NonsmoothSpec::Zero,
            NonsmoothSpec::L1Penalty { mu: 0.3 },
            NonsmoothSpec::L1Ball { radius: 1.7 },
            NonsmoothSpec::Box {
                lo: dvector![-1.0, -2.0, 0.0],
                hi: dvector![1.0, 0.5, 0.1],
            },
        ] {
            let p = synthetic_quadratic_problem(&SyntheticConfig {
                dim: 3,
                lipschitz: vec![1.0, 2.5],
                curvature: Curvature::Indefinite,
                h,
                g0_lipschitz: Some(0.2),
                seed: 5,
            })
            .unwrap();
            let mut buf = Vec::new();
            write_problem(&p, &mut buf).unwrap();
            let back = read_problem(&buf[..]).unwrap();
            assert_eq!(back.h(), p.h());
            assert_eq!(back.lipschitz(), p.lipschitz());
            let z = dvector![0.3, -0.7, 1.1];
            assert_eq!(back.objective(&z).unwrap(), p.objective(&z).unwrap());
            assert_eq!(back.full_gradient(&z).unwrap(), p.full_gradient(&z).unwrap());
        }
    }

    #[test]
    fn malformed_input_reports_line() {
        let err = read_problem("2 1\ncomponent 1\n1 0\n0 x\n0 0\ng0 none\nh zero\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, NesttError::Parse { line: 4, .. }), "{err}");
        assert!(read_problem("2\n".as_bytes()).is_err());
    }

    #[test]
    fn black_box_is_not_serializable() {
        let c = SmoothComponent::black_box(1, 1.0, |z| z[0], |_| dvector![1.0]);
        let p = CompositeProblem::new(vec![c], None, NonsmoothSpec::Zero).unwrap();
        assert!(write_problem(&p, Vec::new()).is_err());
    }
}
