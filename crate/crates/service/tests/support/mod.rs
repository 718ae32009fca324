#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use famrisk_core::kb::synthetic::synthetic_bundle;
use famrisk_core::{KnowledgeBase, RunSettings};
use famrisk_service::{Caller, MemoryStore, Role, Service, ServiceConfig, Store};

pub fn kb() -> Arc<KnowledgeBase> {
    Arc::new(synthetic_bundle())
}

pub fn config(workers: usize) -> ServiceConfig {
    ServiceConfig {
        workers,
        ..ServiceConfig::default()
    }
}

pub fn memory_service(workers: usize) -> Service {
    Service::start(Arc::new(MemoryStore::new()), kb(), config(workers)).unwrap()
}

pub fn service_on(store: Arc<dyn Store>, cfg: ServiceConfig) -> Service {
    Service::start(store, kb(), cfg).unwrap()
}

pub fn caller(svc: &Service, name: &str) -> Caller {
    let password = format!("{name}-pw-Σ9");
    if svc.login(name, &password).is_err() {
        svc.register(name, &password).unwrap();
    }
    svc.authenticate(&svc.login(name, &password).unwrap().token).unwrap()
}

pub fn admin(svc: &Service, name: &str) -> Caller {
    let password = format!("{name}-pw-Σ9");
    svc.create_account(name, &password, Role::Admin).unwrap();
    svc.authenticate(&svc.login(name, &password).unwrap().token).unwrap()
}

/// Quick complete-age run settings (no imputation needed on complete pedigrees).
pub fn quick_settings() -> RunSettings {
    RunSettings {
        imputation_iterations: 2,
        seed: 7,
        ..RunSettings::default()
    }
}

pub fn drain(svc: &Service) {
    assert!(svc.wait_idle(Duration::from_secs(120)), "queue did not drain");
}
