//! Core library of the multimodal trading agent.
//!
//! Modules, from the bottom up:
//! - [`data`]: price, news and guidance loading and the trading environment
//! - [`metrics`]: return and risk metrics over a portfolio value series
//! - [`indicators`]: technical indicators
//! - [`strategies`]: rule-based strategies and the parameter tuner
//! - [`charting`]: Kline and trading chart rendering
//! - [`prompt`]: HTML-like prompt templates and XML response parsing
//! - [`memory`]: vector memory for intelligence and reflections
//! - [`llm`]: chat backends (remote, scripted, replay)
//! - [`agent`]: the per-day decision pipeline and episode runner

pub mod agent;
pub mod charting;
pub mod data;
pub mod hashing;
pub mod indicators;
pub mod llm;
pub mod memory;
pub mod metrics;
pub mod prompt;
pub mod strategies;
