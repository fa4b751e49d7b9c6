use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::acer::Agent;
use crate::approximator::{write_checkpoint, PolicyParams};
use crate::envs::{make_env, Env};
use crate::replay::Transition;
use crate::{Error, Result, Rng};

/// One evaluation block: mean and per-episode undiscounted returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub step: u64,
    pub mean_return: f64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub config: RunConfig,
    pub evals: Vec<EvalEntry>,
    pub aulc: f64,
    pub final_score: f64,
}

/// Mean of the per-evaluation mean returns.
pub fn aulc(evals: &[EvalEntry]) -> Result<f64> {
    if evals.is_empty() {
        return Err(Error::Empty("evaluation record"));
    }
    Ok(evals.iter().map(|e| e.mean_return).sum::<f64>() / evals.len() as f64)
}

// Independent random streams derived from the run seed.
const STREAM_INIT: u64 = 1;
const STREAM_ENV: u64 = 2;
const STREAM_ACT: u64 = 3;
const STREAM_REPLAY: u64 = 4;
const STREAM_EVAL: u64 = 5;

fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = crate::seeded_rng(seed);
    rng.set_stream(id);
    rng
}

/// Runs `episodes` greedy episodes of a frozen actor, acting with `mu(s)` at
/// every step. Every call with the same arguments sees the same start states.
pub fn evaluate(policy: &PolicyParams, config: &RunConfig, episodes: usize) -> Result<Vec<f64>> {
    let mut env = make_env(&config.env, config.h, config.sub_steps, config.time_limit)?;
    let mut rng = stream(config.seed, STREAM_EVAL);
    (0..episodes)
        .map(|_| {
            let mut s = env.reset(&mut rng);
            let mut ret = 0.0;
            loop {
                let a = policy.mu(&s)?;
                let out = env.step(&a)?;
                ret += out.reward;
                if out.terminal || out.truncated {
                    return Ok(ret);
                }
                s = out.state;
            }
        })
        .collect()
}

fn eval_block(agent: &Agent, config: &RunConfig) -> Result<EvalEntry> {
    let before = agent.training_state_fingerprint();
    let frozen = agent.policy.clone();
    let returns = evaluate(&frozen, config, config.eval_episodes)?;
    if agent.training_state_fingerprint() != before {
        return Err(Error::Contract("evaluation changed the training state".into()));
    }
    Ok(EvalEntry {
        step: agent.clock(),
        mean_return: returns.iter().sum::<f64>() / returns.len() as f64,
        returns,
    })
}

/// Writes the replay memory and current parameters next to the run outputs.
fn diagnostic_dump(agent: &Agent, config: &RunConfig) {
    if let Some(dir) = &config.out {
        let _ = std::fs::create_dir_all(dir);
        let _ = agent.buffer.dump(&dir.join("diagnostic_replay.bin"));
        let _ = write_checkpoint(&dir.join("diagnostic_params.bin"), &agent.checkpoint());
    }
}

/// Act, store, update for `total_steps` environment steps, evaluating at step
/// 0 and after every `eval_interval` steps. Final parameters go to
/// `out/params.bin` when an output directory is configured.
pub fn train(config: &RunConfig) -> Result<RunRecord> {
    train_with(config, |_, _| Ok(()))
}

/// [`train`] with a hook called after every environment step, for in-loop
/// assertions in tests.
pub fn train_with(config: &RunConfig, mut hook: impl FnMut(&Agent, &Transition) -> Result<()>) -> Result<RunRecord> {
    config.validate()?;
    let mut env: Box<dyn Env> = make_env(&config.env, config.h, config.sub_steps, config.time_limit)?;
    let spec = env.spec().clone();
    let mut agent = Agent::new(
        config.agent.clone(),
        spec.state_dim,
        spec.action_dim,
        &mut stream(config.seed, STREAM_INIT),
    )?;
    let mut env_rng = stream(config.seed, STREAM_ENV);
    let mut act_rng = stream(config.seed, STREAM_ACT);
    let mut replay_rng = stream(config.seed, STREAM_REPLAY);

    let mut evals = vec![eval_block(&agent, config)?];
    let mut s = env.reset(&mut env_rng);
    let mut prev: Option<(Vec<f64>, usize)> = None;
    for _ in 0..config.total_steps {
        let t = agent.clock();
        let d = agent.act(&s, prev.as_ref().map(|(a, l)| (a.as_slice(), *l)), &mut act_rng)?;
        let run_len = match (&prev, d.fresh) {
            (Some((_, l)), false) => l + 1,
            _ => 0,
        };
        let out = env.step(&d.action)?;
        let tr = Transition {
            s,
            a: d.action,
            r: out.reward,
            s_next: out.state.clone(),
            terminal: out.terminal,
            truncated: out.truncated,
            fresh: d.fresh,
            p_eff: d.p_eff,
            base_logd: d.base_logd,
            run_len,
            t_global: t,
        };
        let action = tr.a.clone();
        hook(&agent, &tr)?;
        agent.observe(tr)?;
        if out.terminal || out.truncated {
            s = env.reset(&mut env_rng);
            prev = None;
        } else {
            s = out.state;
            prev = Some((action, run_len));
        }

        match agent.train_step(&mut replay_rng) {
            Err(e @ Error::NonFinite(_)) => {
                diagnostic_dump(&agent, config);
                return Err(e);
            }
            r => {
                r?;
            }
        }
        if agent.clock() % config.eval_interval == 0 {
            evals.push(eval_block(&agent, config)?);
        }
    }

    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir)?;
        write_checkpoint(&dir.join("params.bin"), &agent.checkpoint())?;
    }
    Ok(RunRecord {
        seed: config.seed,
        config: config.clone(),
        aulc: aulc(&evals)?,
        final_score: evals.last().expect("initial evaluation").mean_return,
        evals,
    })
}
