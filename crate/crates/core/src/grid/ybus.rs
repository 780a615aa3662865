//! Bus admittance matrix assembly.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Branch, NetworkCase};

/// Two-port admittance entries `(y_ff, y_ft, y_tf, y_tt)` of a branch in the
/// standard pi model with an ideal `tap * e^{j*shift}` transformer on the
/// from side:
///
/// ```text
/// y_tt = y_s + j*b/2
/// y_ff = y_tt / tap^2
/// y_ft = -y_s / (tap * e^{-j*shift})
/// y_tf = -y_s / (tap * e^{+j*shift})
/// ```
///
/// where `y_s = 1/(r + jx)` and `b` is the total charging susceptance.
pub fn branch_two_port(branch: &Branch) -> (Complex64, Complex64, Complex64, Complex64) {
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(branch.r, branch.x);
    let shunt = Complex64::new(0.0, branch.b_charging / 2.0);
    let t = Complex64::from_polar(branch.tap, branch.shift);
    let y_tt = ys + shunt;
    let y_ff = y_tt / (branch.tap * branch.tap);
    let y_ft = -ys / t.conj();
    let y_tf = -ys / t;
    (y_ff, y_ft, y_tf, y_tt)
}

/// Builds the complex bus-admittance matrix for the given in-service flags.
///
/// Assembly goes through a triplet list so each in-service branch
/// contributes exactly its four two-port entries; out-of-service branches
/// contribute nothing. Bus shunts are stamped on the diagonal.
pub fn build_admittance(case: &NetworkCase, statuses: &[bool]) -> DMatrix<Complex64> {
    let n = case.n_buses();
    let mut triplets: Vec<(usize, usize, Complex64)> = Vec::with_capacity(4 * case.n_branches() + n);
    for (j, branch) in case.branches.iter().enumerate() {
        if !statuses.get(j).copied().unwrap_or(false) {
            continue;
        }
        let f = case.bus_position(branch.from_bus).expect("validated case");
        let t = case.bus_position(branch.to_bus).expect("validated case");
        let (y_ff, y_ft, y_tf, y_tt) = branch_two_port(branch);
        triplets.push((f, f, y_ff));
        triplets.push((f, t, y_ft));
        triplets.push((t, f, y_tf));
        triplets.push((t, t, y_tt));
    }
    for (k, bus) in case.buses.iter().enumerate() {
        triplets.push((k, k, Complex64::new(bus.shunt_g, bus.shunt_b)));
    }
    let mut ybus = DMatrix::<Complex64>::zeros(n, n);
    for (r, c, v) in triplets {
        ybus[(r, c)] += v;
    }
    ybus
}
