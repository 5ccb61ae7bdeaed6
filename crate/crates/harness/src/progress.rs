//! Machine-readable progress: one JSON object per line on standard error.

use serde_json::{json, Value};

use crate::matrix::{Cell, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Stderr,
    Silent,
}

impl Progress {
    pub fn emit(&self, value: &Value) {
        if *self == Progress::Stderr {
            eprintln!("{value}");
        }
    }

    pub fn event(&self, event: &str, cell: &Cell, hash: &str, mut extra: Value) {
        if *self == Progress::Silent {
            return;
        }
        let mut v = json!({
            "event": event,
            "benchmark": cell.benchmark,
            "method": cell.method,
            "budget": cell.budget,
            "seed": cell.seed,
            "hash": hash,
        });
        if let (Some(obj), Some(more)) = (v.as_object_mut(), extra.as_object_mut()) {
            obj.append(more);
        }
        self.emit(&v);
    }

    pub fn finished(&self, s: &RunSummary) {
        self.emit(&json!({
            "event": "run_finished",
            "cells": s.cells,
            "computed": s.computed,
            "skipped": s.skipped,
            "failed": s.failed.len(),
            "records": s.records.len(),
        }));
    }
}
