//! Batched, differentiable Soft-DTW.
//!
//! * Forward recurrence scheduled by anti-diagonal wavefronts over a batch of
//!   series pairs, with an optional Sakoe-Chiba band.
//! * Reverse pass computed in log space by default; a linear-space variant is
//!   kept as a reference.
//! * Costs either materialized once (`Unfused`) or recomputed per cell from
//!   cached squared norms (`Fused`), sharing one arithmetic path so both modes
//!   produce identical bits.
//! * An [`AllocationLedger`] that reports the bytes of every long-lived buffer.
//! * Adam-based barycenters and independent reference implementations in
//!   [`oracle`].
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*F32`/`*F64`
//! aliases below name the concrete instantiations.
//!
//! ```
//! use sdtw_core::{SdtwConfigF64, SeriesBatchF64, SoftDtwF64};
//!
//! let x = SeriesBatchF64::new(vec![2.0], 1, 1, 1).unwrap();
//! let y = SeriesBatchF64::new(vec![5.0], 1, 1, 1).unwrap();
//! let sdtw = SoftDtwF64::new(SdtwConfigF64::new(1.0)).unwrap();
//! let (loss, grads) = sdtw.loss_and_grad(&x, &y).unwrap();
//! assert_eq!(loss, vec![9.0]);
//! assert_eq!(grads.grad_x(), &[-6.0]);
//! ```

pub mod backward;
pub mod barycenter;
pub mod config;
pub mod cost;
pub mod engine;
pub mod error;
pub mod forward;
pub mod ledger;
pub mod oracle;
pub mod scalar;
pub mod tensor;
pub mod wavefront;

pub use backward::{
    backward_linear, backward_log, backward_log_raw, input_gradients, input_gradients_in, logsumexp3,
    loss_and_gradients, InputGradients, LogTransitionWeights,
};
pub use barycenter::{
    barycenter_objective, solve_barycenter, AdamOptions, AdamState, BarycenterProblem, BarycenterTrace, Init,
};
pub use config::{BackwardSpace, CostMode, SdtwConfig};
pub use cost::{
    compute_norm_cache, compute_norm_cache_in, cost_at, materialize_costs, materialize_costs_in, CostSource,
    FusedCosts, NormCache,
};
pub use engine::{ForwardOutput, SoftDtw};
pub use error::{Result, SdtwError};
pub use forward::{forward, forward_normalized, softmin, SmoothTriple};
pub use ledger::{AllocationLedger, Buffer, LedgerSnapshot};
pub use scalar::{rel_diff, Real};
pub use tensor::{init_dp_table, CostMatrixBatch, DpTableBatch, GradSpace, GradTableBatch, SeriesBatch};
pub use wavefront::{build_wavefront_plan, Diagonal, WavefrontPlan, DEFAULT_FAST_PATH_THRESHOLD};

pub type SeriesBatchF32 = SeriesBatch<f32>;
pub type SeriesBatchF64 = SeriesBatch<f64>;
pub type SdtwConfigF32 = SdtwConfig<f32>;
pub type SdtwConfigF64 = SdtwConfig<f64>;
pub type SoftDtwF32 = SoftDtw<f32>;
pub type SoftDtwF64 = SoftDtw<f64>;
pub type InputGradientsF32 = InputGradients<f32>;
pub type InputGradientsF64 = InputGradients<f64>;
pub type BarycenterProblemF32 = BarycenterProblem<f32>;
pub type BarycenterProblemF64 = BarycenterProblem<f64>;

/// Runs `f` on a dedicated rayon pool with `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SdtwError::InvalidArgument(format!("cannot build a {threads}-thread pool: {e}")))?;
    Ok(pool.install(f))
}
