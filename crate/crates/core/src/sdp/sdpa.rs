//! Sparse SDPA text export.

use std::fmt::Write;

use super::convert;
use crate::lmi::LmiProblem;

/// Writes the problem as `min Σ c_i x_i s.t. Σ F_i x_i − F_0 ⪰ 0` in sparse
/// SDPA format. Variables appear in the order listed in the header comment;
/// problems without objective carry an extra slack variable `t` last.
pub fn to_sdpa(problem: &LmiProblem) -> String {
    let conv = convert(problem);
    let data = &conv.data;
    let mut out = String::new();
    let mut names: Vec<String> = conv.vars.iter().map(|v| v.to_string()).collect();
    if conv.slack.is_some() {
        names.push("t".into());
    }
    let _ = writeln!(out, "\"variables: {}", names.join(" "));
    let _ = writeln!(out, "{}", data.num_vars());
    let nblocks = data.psd_dims.len() + usize::from(data.lp_dim > 0);
    let _ = writeln!(out, "{nblocks}");
    let mut sizes: Vec<String> = data.psd_dims.iter().map(|d| d.to_string()).collect();
    if data.lp_dim > 0 {
        sizes.push(format!("-{}", data.lp_dim));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let c: Vec<String> = data.b.iter().map(|b| format!("{:e}", -b)).collect();
    let _ = writeln!(out, "{}", c.join(" "));
    let lp_block = data.psd_dims.len() + 1;
    let mut entry = |mat: usize, blk: usize, i: usize, j: usize, v: f64| {
        if v != 0.0 {
            let _ = writeln!(out, "{mat} {blk} {} {} {:e}", i + 1, j + 1, v);
        }
    };
    for (k, cm) in data.c_psd.iter().enumerate() {
        for &(i, j, v) in cm.entries() {
            entry(0, k + 1, i, j, -v);
        }
    }
    for (i, &v) in data.c_lp.iter().enumerate() {
        entry(0, lp_block, i, i, -v);
    }
    for (j, col) in data.cols.iter().enumerate() {
        for (k, m) in &col.psd {
            for &(r, c, v) in m.entries() {
                entry(j + 1, k + 1, r, c, -v);
            }
        }
        for &(i, v) in &col.lp {
            entry(j + 1, lp_block, i, i, -v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{Cone, ParamMatrix, Sense, SymSparse};

    #[test]
    fn scalar_problem_export() {
        let mut pm = ParamMatrix::constant(SymSparse::from_triplets(2, [(0, 0, 1.0)]));
        pm.add_var("d".into(), Cone::Nonnegative, SymSparse::from_triplets(2, [(0, 1, -1.0), (1, 1, -2.0)]))
            .unwrap();
        let mut p = LmiProblem::new();
        p.add_constraint(pm, Sense::Nsd).unwrap();
        p.set_objective([("d".into(), 1.0)].into_iter().collect()).unwrap();
        let text = to_sdpa(&p);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "1");
        assert_eq!(lines[2], "2");
        assert_eq!(lines[3], "2 -1");
        assert_eq!(lines[4], "1e0");
        assert!(lines.contains(&"0 1 1 1 1e0"));
        assert!(lines.contains(&"1 1 1 2 1e0"));
        assert!(lines.contains(&"1 1 2 2 2e0"));
        assert!(lines.contains(&"1 2 1 1 1e0"));
    }
}
