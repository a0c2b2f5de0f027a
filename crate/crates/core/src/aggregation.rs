//! Contribution bookkeeping and size-weighted model averaging.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::holarchy::HolonId;
use crate::param::ParamVector;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("parameter dimension {got} does not match expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("contribution weight must be finite and strictly positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("nothing to aggregate: all contribution blocks are empty")]
    Empty,
    #[error("total contribution weight is zero")]
    ZeroTotalWeight,
}

/// Which part of the contribution matrix an update belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    /// Subordinates, or the holon's own model for terminals.
    Base,
    Neighbor,
    Superior,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column<S> {
    pub sender: HolonId,
    pub theta: ParamVector<S>,
    pub weight: S,
    pub round_tag: u64,
}

/// Received contributions of one holon, split into the base, neighbor and
/// superior blocks. At most one column per sender per block; newer updates
/// replace older ones.
#[derive(Clone, Debug)]
pub struct ContributionState<S> {
    dim: usize,
    order: Option<Arc<HashMap<HolonId, usize>>>,
    blocks: [Vec<Column<S>>; 3],
}

fn slot(block: Block) -> usize {
    match block {
        Block::Base => 0,
        Block::Neighbor => 1,
        Block::Superior => 2,
    }
}

impl<S: Scalar> ContributionState<S> {
    /// Columns inside a block are kept in `HolonId` order.
    pub fn new(dim: usize) -> Self {
        Self { dim, order: None, blocks: Default::default() }
    }

    /// Columns inside a block follow the given rank (declaration order);
    /// senders missing from the map sort last, by id.
    pub fn with_order(dim: usize, order: Arc<HashMap<HolonId, usize>>) -> Self {
        Self { dim, order: Some(order), blocks: Default::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn rank(&self, id: HolonId) -> (usize, HolonId) {
        let r = self
            .order
            .as_ref()
            .and_then(|o| o.get(&id).copied())
            .unwrap_or(usize::MAX);
        (r, id)
    }

    pub fn record_update(
        &mut self,
        block: Block,
        sender: HolonId,
        theta: ParamVector<S>,
        weight: S,
        round_tag: u64,
    ) -> Result<(), AggregationError> {
        if theta.dim() != self.dim {
            return Err(AggregationError::DimensionMismatch { expected: self.dim, got: theta.dim() });
        }
        if weight.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater) || !weight.is_finite() {
            return Err(AggregationError::NonPositiveWeight(weight.to_f64_lossy()));
        }
        let key = self.rank(sender);
        let column = Column { sender, theta, weight, round_tag };
        let order = self.order.clone();
        let rank_of = |id: HolonId| {
            let r = order.as_ref().and_then(|o| o.get(&id).copied()).unwrap_or(usize::MAX);
            (r, id)
        };
        let cols = &mut self.blocks[slot(block)];
        match cols.binary_search_by(|c| rank_of(c.sender).cmp(&key)) {
            Ok(i) => cols[i] = column,
            Err(i) => cols.insert(i, column),
        }
        Ok(())
    }

    pub fn block(&self, block: Block) -> &[Column<S>] {
        &self.blocks[slot(block)]
    }

    pub fn get(&self, block: Block, sender: HolonId) -> Option<&Column<S>> {
        self.block(block).iter().find(|c| c.sender == sender)
    }

    pub fn clear(&mut self, block: Block) {
        self.blocks[slot(block)].clear();
    }

    /// Removes and returns the whole block.
    pub fn take(&mut self, block: Block) -> Vec<Column<S>> {
        std::mem::take(&mut self.blocks[slot(block)])
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.iter().all(Vec::is_empty)
    }

    /// Concatenates the blocks as base | neighbor | superior.
    pub fn assemble(&self) -> Result<AssembledContribution<S>, AggregationError> {
        if self.is_empty() {
            return Err(AggregationError::Empty);
        }
        let cols = self.blocks.iter().flatten();
        Ok(AssembledContribution {
            dim: self.dim,
            columns: cols.clone().map(|c| c.theta.clone()).collect(),
            weights: cols.clone().map(|c| c.weight).collect(),
            senders: cols.map(|c| c.sender).collect(),
        })
    }
}

/// The contribution matrix (one column per parameter vector) together with
/// its weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AssembledContribution<S> {
    pub dim: usize,
    pub columns: Vec<ParamVector<S>>,
    pub weights: Vec<S>,
    pub senders: Vec<HolonId>,
}

impl<S: Scalar> AssembledContribution<S> {
    pub fn from_columns(columns: Vec<ParamVector<S>>, weights: Vec<S>) -> Self {
        let dim = columns.first().map_or(0, |c| c.dim());
        let senders = vec![HolonId::new(0, 1); columns.len()];
        Self { dim, columns, weights, senders }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Per-holon aggregation rule. Only weighted averaging is provided.
pub trait Aggregator<S> {
    fn aggregate(&self, contribution: &AssembledContribution<S>) -> Result<ParamVector<S>, AggregationError>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WeightedAverage;

impl<S: Scalar> Aggregator<S> for WeightedAverage {
    fn aggregate(&self, contribution: &AssembledContribution<S>) -> Result<ParamVector<S>, AggregationError> {
        weighted_average(contribution)
    }
}

/// `(Θ W) / (Wᵀ 1)`, summed in column order.
///
/// A single column is returned unchanged.
pub fn weighted_average<S: Scalar>(ac: &AssembledContribution<S>) -> Result<ParamVector<S>, AggregationError> {
    if ac.columns.is_empty() {
        return Err(AggregationError::Empty);
    }
    if ac.columns.len() != ac.weights.len() {
        return Err(AggregationError::DimensionMismatch { expected: ac.columns.len(), got: ac.weights.len() });
    }
    let dim = ac.columns[0].dim();
    for (col, &w) in ac.columns.iter().zip(&ac.weights) {
        if col.dim() != dim {
            return Err(AggregationError::DimensionMismatch { expected: dim, got: col.dim() });
        }
        if w.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater) || !w.is_finite() {
            return Err(AggregationError::NonPositiveWeight(w.to_f64_lossy()));
        }
    }
    if ac.columns.len() == 1 {
        return Ok(ac.columns[0].clone());
    }
    let total = ac.weights.iter().fold(S::zero(), |acc, &w| acc + w);
    if total == S::zero() {
        return Err(AggregationError::ZeroTotalWeight);
    }
    let mut acc = vec![S::zero(); dim];
    for (col, &w) in ac.columns.iter().zip(&ac.weights) {
        for (a, &v) in acc.iter_mut().zip(col.iter()) {
            *a = *a + w * v;
        }
    }
    for a in &mut acc {
        *a = *a / total;
    }
    Ok(ParamVector::new(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector<f64> {
        ParamVector::new(v.to_vec())
    }

    fn h(i: u32) -> HolonId {
        HolonId::new(1, i)
    }

    #[test]
    fn record_inserts_then_replaces() {
        let mut st = ContributionState::new(2);
        st.record_update(Block::Neighbor, h(2), pv(&[1.0, 1.0]), 3.0, 1).unwrap();
        assert_eq!(st.block(Block::Neighbor).len(), 1);
        st.record_update(Block::Neighbor, h(2), pv(&[5.0, 6.0]), 3.0, 2).unwrap();
        assert_eq!(st.block(Block::Neighbor).len(), 1);
        assert_eq!(st.block(Block::Neighbor)[0].theta, pv(&[5.0, 6.0]));
    }

    #[test]
    fn terminal_base_block_holds_own_model() {
        let mut st = ContributionState::new(2);
        st.record_update(Block::Base, h(1), pv(&[0.5, 0.25]), 10.0, 1).unwrap();
        let ac = st.assemble().unwrap();
        assert_eq!(ac.columns, vec![pv(&[0.5, 0.25])]);
        assert_eq!(ac.weights, vec![10.0]);
    }

    #[test]
    fn record_rejects_bad_input() {
        let mut st = ContributionState::<f64>::new(2);
        assert_eq!(
            st.record_update(Block::Base, h(1), pv(&[1.0]), 1.0, 0),
            Err(AggregationError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(
            st.record_update(Block::Base, h(1), pv(&[1.0, 2.0]), 0.0, 0),
            Err(AggregationError::NonPositiveWeight(0.0))
        );
        assert!(st.record_update(Block::Base, h(1), pv(&[1.0, 2.0]), f64::NAN, 0).is_err());
    }

    #[test]
    fn assemble_orders_blocks_base_neighbor_superior() {
        let mut st = ContributionState::new(1);
        st.record_update(Block::Superior, HolonId::new(0, 1), pv(&[3.0]), 3.0, 0).unwrap();
        st.record_update(Block::Neighbor, h(2), pv(&[2.0]), 2.0, 0).unwrap();
        st.record_update(Block::Base, h(1), pv(&[1.0]), 1.0, 0).unwrap();
        let ac = st.assemble().unwrap();
        assert_eq!(ac.columns, vec![pv(&[1.0]), pv(&[2.0]), pv(&[3.0])]);
        assert_eq!(ac.weights, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn assemble_fedavg_root_shape() {
        let mut st = ContributionState::new(2);
        for i in [3, 1, 4, 2] {
            st.record_update(Block::Base, h(i), pv(&[i as f64, 0.0]), 1.0, 1).unwrap();
        }
        let ac = st.assemble().unwrap();
        assert_eq!(ac.len(), 4);
        assert_eq!(ac.senders, vec![h(1), h(2), h(3), h(4)]);
    }

    #[test]
    fn declaration_order_overrides_id_order() {
        let order: HashMap<_, _> = [(h(3), 0), (h(1), 1), (h(2), 2)].into();
        let mut st = ContributionState::with_order(1, Arc::new(order));
        for i in [1, 2, 3] {
            st.record_update(Block::Base, h(i), pv(&[i as f64]), 1.0, 0).unwrap();
        }
        assert_eq!(st.assemble().unwrap().senders, vec![h(3), h(1), h(2)]);
    }

    #[test]
    fn assemble_empty_fails() {
        assert_eq!(ContributionState::<f64>::new(3).assemble(), Err(AggregationError::Empty));
    }

    #[test]
    fn weighted_average_examples() {
        let ac = AssembledContribution::from_columns(vec![pv(&[1.0, 2.0]), pv(&[3.0, 4.0])], vec![1.0, 1.0]);
        assert_eq!(weighted_average(&ac).unwrap(), pv(&[2.0, 3.0]));
        // (1*1 + 3*3) / 4 = 2.5 ; (2*1 + 4*3) / 4 = 3.5
        let ac = AssembledContribution::from_columns(vec![pv(&[1.0, 2.0]), pv(&[3.0, 4.0])], vec![1.0, 3.0]);
        assert_eq!(weighted_average(&ac).unwrap(), pv(&[2.5, 3.5]));
        let single = AssembledContribution::from_columns(vec![pv(&[0.1, 0.7])], vec![17.0]);
        assert_eq!(weighted_average(&single).unwrap(), pv(&[0.1, 0.7]));
    }

    #[test]
    fn weighted_average_errors() {
        let empty = AssembledContribution::<f64>::from_columns(vec![], vec![]);
        assert_eq!(weighted_average(&empty), Err(AggregationError::Empty));
        let zero = AssembledContribution::from_columns(vec![pv(&[1.0]), pv(&[2.0])], vec![0.0, 0.0]);
        assert!(weighted_average(&zero).is_err());
    }

    #[test]
    fn works_for_f32() {
        let ac = AssembledContribution::from_columns(
            vec![ParamVector::new(vec![1.0f32, 2.0]), ParamVector::new(vec![3.0f32, 4.0])],
            vec![1.0f32, 3.0],
        );
        assert_eq!(weighted_average(&ac).unwrap().as_slice(), &[2.5f32, 3.5]);
    }

    proptest! {
        #[test]
        fn assembly_ignores_recording_order(perm in Just((1u32..=6).collect::<Vec<_>>()).prop_shuffle()) {
            let mut a = ContributionState::new(1);
            let mut b = ContributionState::new(1);
            for i in 1u32..=6 {
                a.record_update(Block::Neighbor, h(i), pv(&[i as f64]), i as f64, 0).unwrap();
            }
            for &i in &perm {
                b.record_update(Block::Neighbor, h(i), pv(&[i as f64]), i as f64, 0).unwrap();
            }
            prop_assert_eq!(a.assemble().unwrap(), b.assemble().unwrap());
        }
    }
}
