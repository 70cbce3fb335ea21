//! Teacher margins, the marginal ReLU and the one-sided L2 distance.
//!
//! Run: cargo run --example partial_l2

use mgd::{estimate_margins, marginal_relu, partial_l2, partial_l2_grad, FeatureMap};

fn main() -> mgd::Result<()> {
    let teacher = FeatureMap::from_rows(2, 4, vec![-2.0, -4.0, 1.0, 3.0, 0.5, 0.2, -1.0, 2.0])?;
    let margins = estimate_margins([&teacher])?;
    println!("margins (mean of negatives): {:?}", margins.as_slice());

    let target = marginal_relu(&teacher, &margins)?;
    println!("clipped target: {:?}", target.as_slice());

    let student = FeatureMap::from_rows(2, 4, vec![-5.0, -1.0, 0.0, 3.0, 0.5, 0.2, -3.0, 1.0])?;
    println!("student:        {:?}", student.as_slice());
    println!("partial L2 {:.3}", partial_l2(&target, &student)?);
    println!("gradient   {:?}", partial_l2_grad(&target, &student)?.as_slice());
    // Entries where the student is already below a non-positive target add
    // nothing: -5 under -2 and -3 under -1 are free.
    Ok(())
}
