//! Embedded example models used by the CLI, the reproduction harness, and
//! tests.

use crate::cbn::Cbn;
use crate::dsl;
use crate::dynamic::Ddn;
use crate::scm::Scm;

pub const ONLINE_CBN: &str = include_str!("../fixtures/online-cbn.crl");
pub const OFFLINE_CBN: &str = include_str!("../fixtures/offline-cbn.crl");
pub const ONLINE_SCM: &str = include_str!("../fixtures/online-scm.crl");
pub const OFFLINE_CONFOUNDED_SCM: &str = include_str!("../fixtures/offline-confounded-scm.crl");
pub const OFFLINE_UNCONFOUNDED_SCM: &str =
    include_str!("../fixtures/offline-unconfounded-scm.crl");
pub const SPORTS_DDN: &str = include_str!("../fixtures/sports-ddn.crl");

/// Fixture names with their sources, in canonical listing order.
pub const ALL: &[(&str, &str)] = &[
    ("online-cbn", ONLINE_CBN),
    ("offline-cbn", OFFLINE_CBN),
    ("online-scm", ONLINE_SCM),
    ("offline-confounded-scm", OFFLINE_CONFOUNDED_SCM),
    ("offline-unconfounded-scm", OFFLINE_UNCONFOUNDED_SCM),
    ("sports-ddn", SPORTS_DDN),
];

pub fn find(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn must_cbn(text: &str) -> Cbn {
    match dsl::load_model(text, false).expect("embedded fixture must parse") {
        (_, dsl::Model::Cbn(m)) => m,
        _ => unreachable!("fixture kind"),
    }
}

fn must_scm(text: &str) -> Scm {
    match dsl::load_model(text, false).expect("embedded fixture must parse") {
        (_, dsl::Model::Scm(m)) => m,
        _ => unreachable!("fixture kind"),
    }
}

fn must_ddn(text: &str) -> Ddn {
    match dsl::load_model(text, false).expect("embedded fixture must parse") {
        (_, dsl::Model::Ddn(m)) => m,
        _ => unreachable!("fixture kind"),
    }
}

pub fn online_cbn() -> Cbn {
    must_cbn(ONLINE_CBN)
}

pub fn offline_cbn() -> Cbn {
    must_cbn(OFFLINE_CBN)
}

pub fn online_scm() -> Scm {
    must_scm(ONLINE_SCM)
}

pub fn offline_confounded_scm() -> Scm {
    must_scm(OFFLINE_CONFOUNDED_SCM)
}

pub fn offline_unconfounded_scm() -> Scm {
    must_scm(OFFLINE_UNCONFOUNDED_SCM)
}

pub fn sports_ddn() -> Ddn {
    must_ddn(SPORTS_DDN)
}
