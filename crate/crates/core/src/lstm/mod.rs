//! Fully decomposed HT LSTM: one projection produces all four gates from
//! `[x ∥ 0_pad ∥ h]`, followed by the usual gate nonlinearities, a softmax
//! head on the last hidden state, and backpropagation through time.

mod cell;
pub mod checkpoint;
mod classifier;

pub use cell::{lstm_step, make_cell, matched_ranks, CellGrads, CellMode, LstmCell, LstmState, Projection, GATES};
pub use classifier::{
    batch_logits, bptt, bptt_finite_diff_check, final_hidden, forward_sequence, mean_loss, softmax_cross_entropy,
    BpttOutput, Classifier, ClassifierGrads, Head, Sequence,
};
