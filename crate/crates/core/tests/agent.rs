mod common;

use std::fs;

use common::{dataset, memory, memory_at, range};
use finagent_core::agent::{
    canned_backend, decision_response, run_episode, warmup, AgentConfig, AgentError, RunContext,
    StepTrace, CANNED_HLR, CANNED_LATEST_MI, CANNED_LLR, CANNED_PAST_MI, MARKER_DECISION,
    MARKER_HIGH_LEVEL_REFLECTION, MARKER_LATEST_MARKET_INTELLIGENCE, MARKER_LOW_LEVEL_REFLECTION,
    MARKER_PAST_MARKET_INTELLIGENCE,
};
use finagent_core::data::Action;
use finagent_core::llm::{Backend, CountingBackend, ScriptedBackend};
use finagent_core::memory::Namespace;
use finagent_core::prompt::TemplateLibrary;

fn ctx<'a>(
    dir: &std::path::Path,
    lib: &'a TemplateLibrary,
    backend: &'a dyn Backend,
) -> RunContext<'a> {
    RunContext {
        dir: dir.to_path_buf(),
        library: lib,
        backend,
        backend_mode: "scripted".into(),
        command: vec!["test".into()],
        resume: false,
    }
}

fn config(toggles: &str) -> AgentConfig {
    AgentConfig {
        toggles: toggles.parse().unwrap(),
        ..AgentConfig::default()
    }
}

#[test]
fn full_episode_writes_every_artifact() {
    let ds = dataset(40);
    let lib = TemplateLibrary::builtin();
    let backend = canned_backend(&[Action::Buy]);
    let dir = tempfile::tempdir().unwrap();
    let mut mem = memory();
    let out = run_episode(
        &ds,
        range(&ds, 20, 25),
        &config("MLHT"),
        &mut mem,
        &ctx(dir.path(), &lib, &backend),
    )
    .unwrap();
    assert_eq!(out.rows.len(), 5);
    assert_eq!(out.rows[0].executed, Action::Buy);
    for f in [
        "trades.log",
        "metrics.csv",
        "config.snapshot",
        "manifest.json",
        "calls.log",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read_dir(dir.path().join("trace")).unwrap().count(), 5);
    let t = &out.traces[1];
    assert_eq!(
        t.call_order(),
        [
            "01_latest_market_intelligence",
            "04_past_market_intelligence",
            "05_low_level_reflection",
            "08_high_level_reflection",
            "11_decision"
        ]
    );
    // One LLR and one HLR record per day, three typed MI records per news day.
    assert_eq!(mem.store.len(Namespace::LowLevelReflection), 5);
    assert_eq!(mem.store.len(Namespace::HighLevelReflection), 5);
    assert_eq!(mem.store.len(Namespace::MarketIntelligence), 15);
    assert!(!out.traces[1].retrieved["02_retrieve_past_market_intelligence"].is_empty());
}

#[test]
fn tools_only_decision_is_a_single_call() {
    let ds = dataset(40);
    let lib = TemplateLibrary::builtin();
    let backend = CountingBackend::new(canned_backend(&[Action::Buy]));
    let dir = tempfile::tempdir().unwrap();
    let mut mem = memory();
    let out = run_episode(
        &ds,
        range(&ds, 30, 31),
        &config("T"),
        &mut mem,
        &ctx(dir.path(), &lib, &backend),
    )
    .unwrap();
    assert_eq!(backend.calls(), 1);
    let t = &out.traces[0];
    assert_eq!(t.calls[0].template, "strategy_router");
    assert!(t.tools.is_some());
    assert!(t.latest_market_intelligence_summary.is_none());
    assert_eq!(t.executed_action, Some(Action::Buy));
    assert!(mem.store.is_empty());
}

#[test]
fn insufficient_cash_buy_is_coerced_and_flagged() {
    let ds = dataset(40);
    let lib = TemplateLibrary::builtin();
    let backend = canned_backend(&[Action::Buy, Action::Buy]);
    let dir = tempfile::tempdir().unwrap();
    let out = run_episode(
        &ds,
        range(&ds, 20, 22),
        &config("T"),
        &mut memory(),
        &ctx(dir.path(), &lib, &backend),
    )
    .unwrap();
    assert_eq!(out.rows[1].action, Action::Buy);
    assert_eq!(out.rows[1].executed, Action::Hold);
    assert!(out.rows[1].coerced);
    assert!(out.traces[1].coerced);
}

#[test]
fn failed_step_halts_and_resume_completes_identically() {
    let ds = dataset(40);
    let lib = TemplateLibrary::builtin();
    let r = range(&ds, 20, 26);

    let reference_dir = tempfile::tempdir().unwrap();
    let full = canned_backend(&[Action::Buy, Action::Hold, Action::Sell]);
    run_episode(
        &ds,
        r,
        &config("MLHT"),
        &mut memory_at(&reference_dir.path().join("memory")),
        &ctx(reference_dir.path(), &lib, &full),
    )
    .unwrap();

    // Same script, but decisions run out after three days.
    let dir = tempfile::tempdir().unwrap();
    let flaky = ScriptedBackend::new();
    flaky.on(
        MARKER_DECISION,
        [Action::Buy, Action::Hold, Action::Sell].map(decision_response),
    );
    for (m, resp) in [
        (MARKER_HIGH_LEVEL_REFLECTION, CANNED_HLR),
        (MARKER_LOW_LEVEL_REFLECTION, CANNED_LLR),
        (MARKER_PAST_MARKET_INTELLIGENCE, CANNED_PAST_MI),
        (MARKER_LATEST_MARKET_INTELLIGENCE, CANNED_LATEST_MI),
    ] {
        flaky.always(m, resp);
    }
    let mem_dir = dir.path().join("memory");
    let err = run_episode(
        &ds,
        r,
        &config("MLHT"),
        &mut memory_at(&mem_dir),
        &ctx(dir.path(), &lib, &flaky),
    )
    .unwrap_err();
    match &err {
        AgentError::Step { step, .. } => assert_eq!(step, "11_decision"),
        other => panic!("{other:?}"),
    }
    assert_eq!(
        fs::read_dir(dir.path().join("trace"))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "record")
            .count(),
        3
    );
    // The failed day's memory writes were rolled back.
    assert_eq!(
        memory_at(&mem_dir).store.len(Namespace::LowLevelReflection),
        3
    );

    let rest = canned_backend(&[Action::Hold, Action::Hold, Action::Hold]);
    let mut resumed_ctx = ctx(dir.path(), &lib, &rest);
    resumed_ctx.resume = true;
    let out = run_episode(
        &ds,
        r,
        &config("MLHT"),
        &mut memory_at(&mem_dir),
        &resumed_ctx,
    )
    .unwrap();
    assert_eq!(out.resumed_days, 3);
    assert_eq!(out.rows.len(), 6);
    assert_eq!(
        fs::read(dir.path().join("trades.log")).unwrap(),
        fs::read(reference_dir.path().join("trades.log")).unwrap()
    );
}

#[test]
fn warmup_fills_memory_before_the_test_range() {
    let ds = dataset(60);
    let lib = TemplateLibrary::builtin();
    let backend = canned_backend(&[]);
    let dir = tempfile::tempdir().unwrap();
    let mut mem = memory();
    let train = range(&ds, 20, 40);
    let test = range(&ds, 40, 43);
    let w = warmup(
        &ds,
        train,
        test.start,
        &config("MLHT"),
        &mut mem,
        &ctx(dir.path(), &lib, &backend),
    )
    .unwrap();
    assert_eq!(w.tuned.len(), 3);
    assert_eq!(mem.store.len(Namespace::MarketIntelligence), 60);
    // Live reflections for 20 days plus lagged ones for days at least 14 bars in.
    assert_eq!(mem.store.len(Namespace::LowLevelReflection), 40);
    let lagged: Vec<&StepTrace> = w
        .episode
        .traces
        .iter()
        .filter(|t| t.lagged_low_level_reflection.is_some())
        .collect();
    assert_eq!(lagged.len(), 20);
    assert!(mem
        .store
        .records(Namespace::LowLevelReflection)
        .iter()
        .all(|r| r.date < test.start));

    let mut cold_mem = memory();
    let cold_dir = tempfile::tempdir().unwrap();
    let cold = run_episode(
        &ds,
        test,
        &config("MLHT"),
        &mut cold_mem,
        &ctx(cold_dir.path(), &lib, &backend),
    )
    .unwrap();
    let warm = run_episode(
        &ds,
        test,
        &config("MLHT"),
        &mut mem,
        &ctx(&dir.path().join("test"), &lib, &backend),
    )
    .unwrap();
    assert!(cold.traces[0].retrieved["02_retrieve_past_market_intelligence"].is_empty());
    assert!(!warm.traces[0].retrieved["02_retrieve_past_market_intelligence"].is_empty());
}
