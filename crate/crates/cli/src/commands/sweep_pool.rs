//! Worker pool for sweep cells. Each (method, size) cell is an independent
//! job; the fixed shuffle order and the test split derive from (dataset,
//! seed) alone, so pooled results are identical to a serial run and results
//! are reduced in input order regardless of completion order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use prefbench_core::data::PreferenceDataset;
use prefbench_core::engine::OptimConfig;
use prefbench_core::eval::{sample_efficiency_sweep, MethodSpec, SweepCell};

use crate::error::CmdError;

pub fn run_cells(
    methods: &[MethodSpec],
    dataset: &PreferenceDataset,
    sizes: &[usize],
    optim: &OptimConfig,
    seed: u64,
    workers: usize,
) -> Result<Vec<SweepCell>, CmdError> {
    let jobs: Vec<(MethodSpec, usize)> = methods
        .iter()
        .flat_map(|m| sizes.iter().map(move |&s| (m.clone(), s)))
        .collect();
    if workers <= 1 || jobs.len() <= 1 {
        return sample_efficiency_sweep(methods, dataset, sizes, optim, seed)
            .map_err(CmdError::from);
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SweepCell, String>>>> =
        Mutex::new(vec![None; jobs.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let (method, size) = &jobs[i];
                let result = sample_efficiency_sweep(
                    std::slice::from_ref(method),
                    dataset,
                    std::slice::from_ref(size),
                    optim,
                    seed,
                )
                .map(|mut cells| cells.remove(0))
                .map_err(|e| e.to_string());
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });

    let slots = slots.into_inner().unwrap();
    slots
        .into_iter()
        .map(|slot| {
            slot.expect("every job ran")
                .map_err(CmdError::Data)
        })
        .collect()
}
