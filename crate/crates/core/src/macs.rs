//! Multiply-accumulate counts for the message-passing stage.
//!
//! GCN: one MAC per (edge or self-loop) per output channel per layer, so
//! `(edges + nodes) * sum(out_dim)`.
//!
//! GAT: per layer and head, `head_dim` MACs per (edge or self-loop) for the
//! weighted aggregation plus `2 * head_dim` for that edge's attention logit.
//! This is our own cost model; it is not fitted to any published GAT count.

use crate::model::{LayerWeights, ModelWeights};

pub fn count_macs(num_nodes: usize, kept_edges: usize, model: &ModelWeights) -> u64 {
    let messages = (kept_edges + num_nodes) as u64;
    model
        .layers
        .iter()
        .map(|layer| match layer {
            LayerWeights::Gcn(l) => messages * l.out_dim as u64,
            LayerWeights::Gat(l) => messages * (l.heads * l.head_dim * 3) as u64,
        })
        .sum()
}

/// GCN-only variant for a bare list of layer output widths.
pub fn count_gcn_macs(num_nodes: usize, kept_edges: usize, out_dims: &[usize]) -> u64 {
    (kept_edges + num_nodes) as u64 * out_dims.iter().sum::<usize>() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GatLayer, GcnLayer, HeadMerge};

    fn gcn(dims: &[usize]) -> ModelWeights {
        let layers = dims
            .windows(2)
            .map(|w| GcnLayer {
                in_dim: w[0],
                out_dim: w[1],
                weight: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        ModelWeights::gcn(layers).unwrap()
    }

    #[test]
    fn cora_and_pubmed_shapes() {
        let cora = gcn(&[8, 16, 7]);
        assert_eq!(count_macs(2708, 10556, &cora), 305_072);
        assert_eq!(count_macs(2708, 2111, &cora), 110_837);
        let pubmed = gcn(&[8, 16, 3]);
        assert_eq!(count_macs(19717, 88648, &pubmed), 2_058_935);
        assert_eq!(count_gcn_macs(19717, 88648, &[16, 3]), 2_058_935);
    }

    #[test]
    fn gat_counts_attention() {
        let layer = |in_dim, heads, head_dim, merge| GatLayer {
            in_dim,
            heads,
            head_dim,
            merge,
            weight: vec![0.0; heads * in_dim * head_dim],
            att_src: vec![0.0; heads * head_dim],
            att_dst: vec![0.0; heads * head_dim],
            bias: vec![0.0; if merge == HeadMerge::Concat { heads * head_dim } else { head_dim }],
        };
        let w = ModelWeights::gat(
            vec![layer(4, 8, 16, HeadMerge::Concat), layer(128, 1, 7, HeadMerge::Mean)],
            0.2,
        )
        .unwrap();
        // (10 + 5) * (8*16*3 + 7*3)
        assert_eq!(count_macs(5, 10, &w), 15 * (384 + 21));
    }
}
