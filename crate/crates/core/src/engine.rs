use crate::backward::{input_gradients_in, run_backward, sweep_params, InputGradients};
use crate::config::{CostMode, SdtwConfig};
use crate::cost::{check_pair, compute_norm_cache_in, materialize_costs_in, FusedCosts, NormCache};
use crate::error::{Result, SdtwError};
use crate::forward::run_forward;
use crate::ledger::AllocationLedger;
use crate::scalar::Real;
use crate::tensor::{CostMatrixBatch, DpTableBatch, GradTableBatch, SeriesBatch};
use crate::wavefront::{build_wavefront_plan, WavefrontPlan, DEFAULT_FAST_PATH_THRESHOLD};

/// Everything the backward pass needs from a forward call.
#[derive(Debug)]
pub struct ForwardOutput<T> {
    pub loss: Vec<T>,
    pub table: DpTableBatch<T>,
    cache: NormCache<T>,
    costs: Option<CostMatrixBatch<T>>,
    plan: WavefrontPlan,
}

impl<T> ForwardOutput<T> {
    /// The materialized cost tensor, present only in unfused mode.
    pub fn cost_tensor(&self) -> Option<&CostMatrixBatch<T>> {
        self.costs.as_ref()
    }

    pub fn norm_cache(&self) -> &NormCache<T> {
        &self.cache
    }

    pub fn plan(&self) -> &WavefrontPlan {
        &self.plan
    }
}

/// Configured soft-DTW evaluator, optionally reporting every long-lived buffer
/// to an [`AllocationLedger`].
///
/// Parallelism comes from the ambient rayon pool; run inside
/// `ThreadPool::install` to pin the worker count.
#[derive(Debug, Clone)]
pub struct SoftDtw<T> {
    cfg: SdtwConfig<T>,
    ledger: Option<AllocationLedger>,
    fast_path_threshold: usize,
}

impl<T: Real> SoftDtw<T> {
    pub fn new(cfg: SdtwConfig<T>) -> Result<Self> {
        cfg.validate_gamma()?;
        Ok(Self {
            cfg,
            ledger: None,
            fast_path_threshold: DEFAULT_FAST_PATH_THRESHOLD,
        })
    }

    pub fn with_ledger(mut self, ledger: AllocationLedger) -> Self {
        self.ledger = Some(ledger);
        self
    }

    /// Grids whose longest anti-diagonal is at most `threshold` cells run as a
    /// plain row-major loop per batch element. `0` forces the wavefront
    /// schedule, `usize::MAX` forces the row-major loop.
    pub fn with_fast_path_threshold(mut self, threshold: usize) -> Self {
        self.fast_path_threshold = threshold;
        self
    }

    pub fn config(&self) -> &SdtwConfig<T> {
        &self.cfg
    }

    pub fn ledger(&self) -> Option<&AllocationLedger> {
        self.ledger.as_ref()
    }

    pub fn forward(&self, x: &SeriesBatch<T>, y: &SeriesBatch<T>) -> Result<ForwardOutput<T>> {
        check_pair(x, y)?;
        let (batch, n, m) = (x.batch_size(), x.len(), y.len());
        self.cfg.validate_for(n, m)?;
        let plan = build_wavefront_plan(n, m, self.cfg.bandwidth)?;
        let ledger = self.ledger.as_ref();

        let cache = compute_norm_cache_in(x, y, ledger)?;
        let costs = match self.cfg.cost_mode {
            CostMode::Unfused => Some(materialize_costs_in(x, y, &cache, ledger)?),
            CostMode::Fused => None,
        };
        let mut table = DpTableBatch::new(batch, n, m, ledger)?;
        let gamma = self.cfg.gamma;
        match &costs {
            Some(d) => run_forward(&mut table, d, &plan, gamma, self.fast_path_threshold),
            None => {
                let fused = FusedCosts::new(x, y, &cache)?;
                run_forward(&mut table, &fused, &plan, gamma, self.fast_path_threshold)
            }
        }
        let loss: Vec<T> = (0..batch).map(|b| table.end_value(b)).collect();
        if let Some(b) = loss.iter().position(|v| !v.is_finite()) {
            return Err(SdtwError::UnreachableEnd { b });
        }
        Ok(ForwardOutput {
            loss,
            table,
            cache,
            costs,
            plan,
        })
    }

    /// Reverse sweep over a forward result, consuming its table.
    ///
    /// Returns `E` in linear space together with the remaining forward state,
    /// so the cost tensor stays alive until the caller is done with it.
    pub fn alignment(
        &self,
        fwd: ForwardOutput<T>,
        x: &SeriesBatch<T>,
        y: &SeriesBatch<T>,
    ) -> Result<GradTableBatch<T>> {
        let ForwardOutput {
            table,
            cache,
            costs,
            plan,
            ..
        } = fwd;
        self.sweep(table, &cache, costs.as_ref(), &plan, x, y)
    }

    fn sweep(
        &self,
        table: DpTableBatch<T>,
        cache: &NormCache<T>,
        costs: Option<&CostMatrixBatch<T>>,
        plan: &WavefrontPlan,
        x: &SeriesBatch<T>,
        y: &SeriesBatch<T>,
    ) -> Result<GradTableBatch<T>> {
        let params = sweep_params(self.cfg.gamma, self.cfg.backward_space);
        let ledger = self.ledger.as_ref();
        match costs {
            Some(d) => run_backward(table, d, plan, params, self.fast_path_threshold, ledger),
            None => {
                let fused = FusedCosts::new(x, y, cache)?;
                run_backward(table, &fused, plan, params, self.fast_path_threshold, ledger)
            }
        }
    }

    /// Backward pass plus input gradients. Forward state, including any cost
    /// tensor, is released only after the gradients exist.
    pub fn backward(&self, fwd: ForwardOutput<T>, x: &SeriesBatch<T>, y: &SeriesBatch<T>) -> Result<InputGradients<T>> {
        let ForwardOutput {
            table,
            cache,
            costs,
            plan,
            ..
        } = fwd;
        let e = self.sweep(table, &cache, costs.as_ref(), &plan, x, y)?;
        let grads = input_gradients_in(&e, x, y, self.ledger.as_ref())?;
        drop(e);
        drop(costs);
        drop(cache);
        Ok(grads)
    }

    pub fn loss_and_grad(&self, x: &SeriesBatch<T>, y: &SeriesBatch<T>) -> Result<(Vec<T>, InputGradients<T>)> {
        let fwd = self.forward(x, y)?;
        let loss = fwd.loss.clone();
        let grads = self.backward(fwd, x, y)?;
        Ok((loss, grads))
    }

    pub fn loss(&self, x: &SeriesBatch<T>, y: &SeriesBatch<T>) -> Result<Vec<T>> {
        Ok(self.forward(x, y)?.loss)
    }

    /// `sdtw(x, y) − ½(sdtw(x, x) + sdtw(y, y))`; requires equal lengths.
    pub fn normalized_loss(&self, x: &SeriesBatch<T>, y: &SeriesBatch<T>) -> Result<Vec<T>> {
        check_pair(x, y)?;
        if x.len() != y.len() {
            return Err(SdtwError::UnequalLengths { n: x.len(), m: y.len() });
        }
        let xy = self.loss(x, y)?;
        let xx = self.loss(x, x)?;
        let yy = self.loss(y, y)?;
        let half = T::lit(0.5);
        Ok(xy
            .iter()
            .zip(xx.iter().zip(&yy))
            .map(|(&a, (&b, &c))| a - half * (b + c))
            .collect())
    }
}
