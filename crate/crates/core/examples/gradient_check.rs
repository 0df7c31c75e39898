//! Finite-difference gradient check of every layer type in double precision.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example gradient_check
//! ```

use aesthevo::apm::gradient_check;

fn main() {
    let report = gradient_check(0);
    println!("dense + sigmoid + mse  max rel err {:.3e}", report.dense_only);
    println!("full stack             max rel err {:.3e}", report.full_stack);
    for (name, err) in &report.per_tensor {
        println!("  {name:<12} {err:.3e}");
    }
    println!("parameters checked {}", report.params_checked);
    println!("finite on zero input {}", report.zero_input_finite);
    println!("{}", if report.max_error() < 1e-4 { "PASS" } else { "FAIL" });
}
