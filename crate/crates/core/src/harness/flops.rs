//! Forward FLOP counts from layer graphs.
//!
//! Weight reuse does not reduce compute, so reused layers count in full.
//! Marker layers carry no cost model and count as zero.

use crate::descriptor::{LayerGraph, LayerKind};

pub fn flops_estimate(graph: &LayerGraph, h: usize, w: usize) -> u64 {
    let hw = (h * w) as u64;
    graph
        .layers
        .iter()
        .map(|l| {
            let (kh, kw) = (l.kernel_h as u64, l.kernel_w as u64);
            let (cin, cout) = (l.in_channels as u64, l.out_channels as u64);
            match l.kind {
                LayerKind::Conv2d => 2 * kh * kw * cin * cout * hw + if l.has_bias { cout * hw } else { 0 },
                LayerKind::DepthwiseConv2d => 2 * kh * kw * cin * hw,
                LayerKind::Relu | LayerKind::ElementwiseAdd => hw * cout,
                _ => 0,
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::LayerSpec;

    #[test]
    fn single_conv() {
        let g = LayerGraph::new(vec![LayerSpec::conv2d(64, 64, 3, 3, true)], 0, 64);
        assert_eq!(flops_estimate(&g, 32, 32), 75_563_008);
    }

    #[test]
    fn relu_only() {
        let g = LayerGraph::new(vec![LayerSpec::relu(5)], 0, 5);
        assert_eq!(flops_estimate(&g, 4, 6), 120);
    }
}
