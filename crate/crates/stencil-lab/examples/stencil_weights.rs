//! Solve one stencil's approximation weights and verify them against fields
//! with known derivatives.
//!
//! The weights come from a polyharmonic RBF (r^3) augmented with the six
//! monomials up to degree 2, so every polynomial of total degree <= 2 is
//! differentiated exactly at the central node.
//!
//!     cargo run --example stencil_weights

use stencil_lab::fields::default_fields;
use stencil_lab::node_gen::normalize;
use stencil_lab::rbf_fd::{apply_weights, solve_weights_all};
use stencil_lab::{Point2, StencilSample};

fn main() -> stencil_lab::Result<()> {
    // A slightly irregular 7-node sample around the first node.
    let sample = StencilSample {
        nodes: vec![
            Point2::new(0.30, 0.40),
            Point2::new(0.33, 0.41),
            Point2::new(0.28, 0.43),
            Point2::new(0.26, 0.38),
            Point2::new(0.31, 0.36),
            Point2::new(0.35, 0.38),
            Point2::new(0.29, 0.45),
        ],
        center_index: 0,
    };
    let stencil = normalize(&sample)?;
    let [dx, dy, lap] = solve_weights_all(&stencil)?;

    println!("stencil size          = {}", stencil.size_s());
    println!("dx weights            = {:>10.4?}", dx.weights);
    println!("dy weights            = {:>10.4?}", dy.weights);
    println!("laplacian weights     = {:>10.4?}", lap.weights);

    // Exactness on the augmentation space: constants are annihilated.
    let ones = vec![1.0; stencil.size_s()];
    println!(
        "sum of dx weights     = {:+.2e}",
        apply_weights(&dx, &ones)?
    );
    println!(
        "sum of lap weights    = {:+.2e}",
        apply_weights(&lap, &ones)?
    );

    // Each weight set approximates its operator on smooth test fields.
    let origin = Point2::new(0.0, 0.0);
    for field in default_fields() {
        let values: Vec<f64> = stencil.coords().iter().map(|&p| field.value(p)).collect();
        let (gx, gy) = field.gradient(origin);
        let exact = [gx, gy, field.laplacian(origin)];
        println!("field {field:?}");
        for (ws, reference) in [&dx, &dy, &lap].into_iter().zip(exact) {
            let approx = apply_weights(ws, &values)?;
            println!(
                "  {:9?}: approx {approx:+.6}, exact {reference:+.6}, error {:+.2e}",
                ws.op,
                approx - reference
            );
        }
    }
    Ok(())
}
