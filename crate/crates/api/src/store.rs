//! In-memory sessions with least-recently-used eviction.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use occq::inference::mcmc::{McmcConfig, PosteriorDraws};
use occq::inference::posterior::PriorSpec;
use occq::inference::series::CountSeries;

use crate::error::ErrorDetail;

/// A finished fit. Never mutated after it is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub priors: PriorSpec,
    pub mcmc: McmcConfig,
    pub warnings: Vec<String>,
    pub posterior: PosteriorDraws,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitState {
    Running { seed: u64 },
    Done(Arc<FitOutcome>),
    Failed { seed: u64, error: ErrorDetail },
}

impl FitState {
    pub fn seed(&self) -> u64 {
        match self {
            FitState::Running { seed } | FitState::Failed { seed, .. } => *seed,
            FitState::Done(o) => o.mcmc.seed,
        }
    }
}

/// Snapshot of one session. Updates replace the whole snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub series: Arc<CountSeries>,
    pub fit: Option<FitState>,
}

impl Session {
    fn running(&self) -> bool {
        matches!(self.fit, Some(FitState::Running { .. }))
    }
}

struct Slot {
    session: Arc<Session>,
    last_used: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreFull;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartFit {
    Started,
    Busy,
    Missing,
}

/// Readers share the lock; inserts and replacements take it exclusively.
pub struct SessionStore {
    capacity: usize,
    clock: AtomicU64,
    slots: RwLock<HashMap<String, Slot>>,
}

impl SessionStore {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), clock: AtomicU64::new(0), slots: RwLock::new(HashMap::new()) }
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn len(&self) -> usize {
        self.slots.read().expect("session lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        let slots = self.slots.read().expect("session lock");
        let slot = slots.get(id)?;
        slot.last_used.store(self.tick(), Ordering::Relaxed);
        Some(slot.session.clone())
    }

    /// Adds a session, evicting the least recently used idle one when full.
    /// Sessions with a running fit are never evicted.
    pub fn insert(&self, session: Session) -> Result<Arc<Session>, StoreFull> {
        let mut slots = self.slots.write().expect("session lock");
        if !slots.contains_key(&session.id) && slots.len() >= self.capacity {
            let victim = slots
                .iter()
                .filter(|(_, s)| !s.session.running())
                .min_by_key(|(_, s)| s.last_used.load(Ordering::Relaxed))
                .map(|(k, _)| k.clone())
                .ok_or(StoreFull)?;
            slots.remove(&victim);
        }
        let session = Arc::new(session);
        slots.insert(
            session.id.clone(),
            Slot { session: session.clone(), last_used: AtomicU64::new(self.tick()) },
        );
        Ok(session)
    }

    /// Replaces the fit state of an existing session; returns false if the
    /// session is gone.
    pub fn set_fit(&self, id: &str, fit: FitState) -> bool {
        let mut slots = self.slots.write().expect("session lock");
        match slots.get_mut(id) {
            Some(slot) => {
                let next = Session { fit: Some(fit), ..(*slot.session).clone() };
                slot.session = Arc::new(next);
                true
            }
            None => false,
        }
    }

    /// Marks a fit as running unless one already is.
    pub fn start_fit(&self, id: &str, seed: u64) -> StartFit {
        let mut slots = self.slots.write().expect("session lock");
        let Some(slot) = slots.get_mut(id) else {
            return StartFit::Missing;
        };
        if slot.session.running() {
            return StartFit::Busy;
        }
        let next = Session { fit: Some(FitState::Running { seed }), ..(*slot.session).clone() };
        slot.session = Arc::new(next);
        slot.last_used.store(self.tick(), Ordering::Relaxed);
        StartFit::Started
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use occq::inference::series::YearMonth;

    fn session(id: &str) -> Session {
        let series = CountSeries::from_counts("c", YearMonth::new(2020, 1).unwrap(), &[1, 2, 3]);
        Session { id: id.into(), series: Arc::new(series), fit: None }
    }

    #[test]
    fn evicts_least_recently_used() {
        let store = SessionStore::new(2);
        store.insert(session("a")).unwrap();
        store.insert(session("b")).unwrap();
        store.get("a");
        store.insert(session("c")).unwrap();
        assert!(store.get("a").is_some());
        assert!(store.get("b").is_none());
        assert!(store.get("c").is_some());
    }

    #[test]
    fn running_fits_are_not_evicted() {
        let store = SessionStore::new(1);
        store.insert(session("a")).unwrap();
        assert_eq!(store.start_fit("a", 1), StartFit::Started);
        assert_eq!(store.start_fit("a", 2), StartFit::Busy);
        assert_eq!(store.start_fit("z", 2), StartFit::Missing);
        assert_eq!(store.insert(session("b")).unwrap_err(), StoreFull);
        assert!(store.set_fit("a", FitState::Failed { seed: 1, error: crate::error::ApiError::bad_request("x").detail }));
        assert!(store.insert(session("b")).is_ok());
        assert!(store.get("a").is_none());
    }

    #[test]
    fn readers_keep_their_snapshot_after_eviction() {
        let store = SessionStore::new(1);
        store.insert(session("a")).unwrap();
        let held = store.get("a").unwrap();
        store.insert(session("b")).unwrap();
        assert_eq!(held.series.counts(), vec![1, 2, 3]);
    }
}
