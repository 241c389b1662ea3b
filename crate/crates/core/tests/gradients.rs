//! Analytic gradients against central differences on 64-bit graphs.

mod common;

use common::grad::{self, Cases};

fn assert_all(cases: Cases) {
    let failed: Vec<_> = cases.iter().filter(|c| !c.passed || c.params == 0).collect();
    assert!(failed.is_empty(), "{failed:?}");
}

#[test]
fn elementwise_and_matrix_primitives() {
    assert_all(grad::elementwise_and_matrix());
}

#[test]
fn structural_primitives() {
    assert_all(grad::structural());
}

#[test]
fn loss_primitives() {
    assert_all(grad::losses());
}

#[test]
fn attention_masked_and_grouped() {
    assert_all(grad::attention());
}

#[test]
fn sum_of_softmax_of_product() {
    let cases = grad::softmax_of_product();
    // constant in W: both sides of the check are zero
    assert!(cases[0].worst < grad::TOL, "{:?}", cases[0]);
    assert_all(cases);
}

#[test]
fn linear_layer_with_mean_loss() {
    let cases = grad::linear_mean();
    assert!(cases[0].worst < 1e-6, "{:?}", cases[0]);
    assert_all(cases);
}

#[test]
fn two_layer_attention_block() {
    assert_all(grad::attention_blocks());
}

#[test]
fn miniature_heads() {
    let cases = grad::miniature_heads();
    assert_eq!(cases.len(), 6);
    assert_all(cases);
}

#[test]
fn tiny_encoder_masked_loss() {
    assert_all(grad::tiny_encoder());
}
