//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Run with `cargo test -p boardball-cli --test acceptance`.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use boardball_core::agents::{run_block, Agent, AgentConfig, AgentObservation, AgentPair, AgentSide, RunSettings};
use boardball_core::analysis::peaks::{count_peaks, count_speed_peaks};
use boardball_core::analysis::segment::detect_segments;
use boardball_core::analysis::{
    classify_step, pca2, segment_board_movements, segment_delay, strategy_ellipse, MovementClass, DELAY_FRACTIONS,
    PEAK_PROMINENCE,
};
use boardball_core::dynamics::step;
use boardball_core::logs::BlockLog;
use boardball_core::protocol::{
    build_schedule, validate_schedule, Block, Condition, Mode, Performer, ProtocolEvent, ProtocolSettings,
    TrialConfig, TrialPhase, TrialProtocol, DWELL_REQUIRED_S,
};
use boardball_core::report::{analyze_log, report_from_rows};
use boardball_core::session::{InputHeight, Role, Session, TranscriptFile, WireMessage};
use boardball_core::sigproc::{butter_lowpass, filtfilt, FilterSpec};
use boardball_core::{Side, SimParams, SimState, StylusInput};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn statics() -> Outcome {
    let p = SimParams::default();
    let expected = -(p.board_mass + p.ball_mass) * p.gravity / (2.0 * p.hand_stiffness + p.center_stiffness);
    let start = Instant::now();
    let mut s = SimState::default();
    let pinned = StylusInput::at_rest(0.0, 0.0);
    for _ in 0..5000 {
        s = step(&s, &pinned, &p).unwrap().0;
    }
    let secs = start.elapsed().as_secs_f64();
    let z = s.z_board * 1e3;
    let pass = (z - (-1.090)).abs() <= 0.02 && (expected * 1e3 - (-1.090)).abs() <= 0.02 && secs < 1.0;
    outcome(
        pass,
        format!("z* = {z:.4} mm after 5 s (closed form {:.4} mm, target -1.090 ± 0.02), {secs:.3} s", expected * 1e3),
    )
}

/// Ball displacement after 1 s on a board held at 2 degrees.
fn tilted_roll(dt: f64) -> f64 {
    let params = SimParams { dt, ..SimParams::default() };
    let theta = 2f64.to_radians();
    let mut s = SimState { theta, ..SimState::default() };
    let input = StylusInput::at_rest(0.0, 0.0);
    for _ in 0..(1.0 / dt).round() as usize {
        s.theta = theta;
        s.theta_dot = 0.0;
        s = step(&s, &input, &params).unwrap().0;
    }
    s.p_ball.abs()
}

fn kinematics() -> Outcome {
    let exact = 0.5 * 9.81 * 2f64.to_radians().sin();
    let e1 = (tilted_roll(1e-3) - exact).abs() / exact;
    let e2 = (tilted_roll(5e-4) - exact).abs() / exact;
    let ratio = e1 / e2;
    let pass = e1 <= 1e-3 && (1.8..=2.2).contains(&ratio);
    outcome(
        pass,
        format!(
            "relative error {:.12e} at dt = 1 ms (limit 1e-3), {:.12e} at 0.5 ms, ratio {ratio:.4}",
            e1,
            e2
        ),
    )
}

fn lag_of_max_xcorr(a: &[f64], b: &[f64], max_lag: i64) -> i64 {
    let n = a.len() as i64;
    (-max_lag..=max_lag)
        .map(|lag| {
            let c: f64 = (0..n)
                .filter_map(|i| {
                    let j = i + lag;
                    (0..n).contains(&j).then(|| a[i as usize] * b[j as usize])
                })
                .sum();
            (lag, c)
        })
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
        .0
}

fn filter() -> Outcome {
    let spec = FilterSpec::tenth_order(20.0, 1000.0);
    let cascade = butter_lowpass(&spec).unwrap();
    let db = cascade.magnitude_db(20.0);
    let mut lags = Vec::new();
    for f in [2.0, 10.0] {
        let x: Vec<f64> = (0..4000).map(|i| (2.0 * PI * f * i as f64 / 1000.0).sin()).collect();
        let y = filtfilt(&x, &cascade).unwrap();
        lags.push(lag_of_max_xcorr(&x, &y, 100));
    }
    let pass = spec.design_order() == 5 && (db + 3.01).abs() <= 0.1 && lags.iter().all(|&l| l == 0);
    outcome(
        pass,
        format!(
            "design order {}, single pass {db:.4} dB at 20 Hz, xcorr lag {} / {} samples at 2 / 10 Hz",
            spec.design_order(),
            lags[0],
            lags[1]
        ),
    )
}

fn classification_oracle(l: f64, r: f64) -> MovementClass {
    let still_l = l.abs() < 0.003;
    let still_r = r.abs() < 0.003;
    if still_l && still_r {
        MovementClass::Still
    } else if still_l || still_r {
        MovementClass::Single
    } else if l.signum() == r.signum() {
        MovementClass::Competitive
    } else {
        MovementClass::Cooperative
    }
}

fn classification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        match rng.random_range(0..10) {
            0 => sign * 0.003,
            1 => sign * 0.003f64.next_down(),
            2 => sign * 0.003f64.next_up(),
            _ => sign * 0.003 * rng.random_range(0.5..1.5),
        }
    };
    let n = 100_000;
    let mut agree = 0;
    for _ in 0..n {
        let (l, r) = (draw(&mut rng), draw(&mut rng));
        if classify_step(l, r) == classification_oracle(l, r) {
            agree += 1;
        }
    }
    outcome(agree == n, format!("{agree}/{n} random pairs match the brute-force oracle"))
}

/// Trapezoid in deg/s converted to rad/s, sampled at 1 kHz.
fn trapezoid(rise: f64, hold: f64, peak: f64, lead: f64) -> Vec<f64> {
    let total = lead + 2.0 * rise + hold + lead;
    (0..(total * 1000.0) as usize)
        .map(|i| {
            let t = i as f64 / 1000.0 - lead;
            let v = if t < 0.0 {
                0.0
            } else if t < rise {
                peak * t / rise
            } else if t < rise + hold {
                peak
            } else if t < 2.0 * rise + hold {
                peak * (2.0 * rise + hold - t) / rise
            } else {
                0.0
            };
            v.to_radians()
        })
        .collect()
}

fn rect(rate_deg: f64, dur: f64) -> Vec<f64> {
    let mut v = vec![0.0; 300];
    v.extend(std::iter::repeat_n(rate_deg.to_radians(), (dur * 1000.0).round() as usize));
    v.extend(std::iter::repeat_n(0.0, 300));
    v
}

fn segmentation() -> Outcome {
    // 3 deg/s plateau of 0.8 s with 0.6 s ramps: 1 deg/s is crossed a third
    // of the way up and down each ramp
    let (rise, hold, lead) = (0.6, 0.8, 0.5);
    let segs = segment_board_movements(&trapezoid(rise, hold, 3.0, lead), 1000.0).unwrap();
    let want = (lead + rise / 3.0, lead + rise + hold + 2.0 * rise / 3.0);
    let boundary_ok = segs.len() == 1
        && (segs[0].t_start - want.0).abs() <= 0.010
        && (segs[0].t_end - want.1).abs() <= 0.010;
    let got = segs.first().map(|s| (s.t_start, s.t_end)).unwrap_or((f64::NAN, f64::NAN));

    // gates on the thresholded series: each counterexample fails exactly one
    let short = detect_segments(&rect(20.0, 0.090), 1000.0).is_empty(); // 1.8 deg in 90 ms
    let long_enough = detect_segments(&rect(20.0, 0.150), 1000.0).len() == 1;
    let small = detect_segments(&rect(1.5, 0.200), 1000.0).is_empty(); // 0.3 deg in 200 ms
    let large_enough = detect_segments(&rect(1.5, 0.800), 1000.0).len() == 1; // 1.2 deg
    // the same counterexamples through the full filtered path
    let filtered = segment_board_movements(&rect(2.0, 0.050), 1000.0).unwrap().is_empty()
        && segment_board_movements(&rect(1.5, 0.200), 1000.0).unwrap().is_empty();
    let pass = boundary_ok && short && long_enough && small && large_enough && filtered;
    outcome(
        pass,
        format!(
            "boundaries ({:.4}, {:.4}) s vs ({:.4}, {:.4}) s; duration gate {}; angle gate {}; filtered gates {}",
            got.0,
            got.1,
            want.0,
            want.1,
            if short && long_enough { "ok" } else { "broken" },
            if small && large_enough { "ok" } else { "broken" },
            if filtered { "ok" } else { "broken" },
        ),
    )
}

/// Speed profile with a 4 ms linear onset and a smooth 250 ms decay.
fn onset_bump(t0: f64, scale: f64, direction: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / 1000.0 - t0;
            let v = if t < 0.0 {
                0.0
            } else if t < 0.004 {
                t / 0.004
            } else {
                let u = (t - 0.004) / 0.25;
                if u < 1.0 { 0.5 * (1.0 + (PI * u).cos()) } else { 0.0 }
            };
            direction * scale * 0.05 * v
        })
        .collect()
}

fn delay_recovery() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut all = true;
    for lag in [0.020, 0.050, 0.080, 0.120] {
        for (scale_l, scale_r) in [(1.0, 1.0), (1.0, 3.0), (3.0, 1.0)] {
            let left = onset_bump(0.100, scale_l, 1.0, 600);
            let right = onset_bump(0.100 + lag, scale_r, -1.0, 600);
            for f in DELAY_FRACTIONS {
                match segment_delay(&left, &right, 1.0, -1.0, f, 1000.0) {
                    Some(d) => worst = worst.max((d.absolute() - lag).abs()),
                    None => all = false,
                }
            }
        }
    }
    let pass = all && worst <= 0.002;
    outcome(
        pass,
        format!("lags 20/50/80/120 ms, both sides scaled x1 and x3, 4 thresholds: worst error {:.3} ms", worst * 1e3),
    )
}

fn peak_count() -> Outcome {
    let mut got = Vec::new();
    for k in 1..=6 {
        let speed: Vec<f64> = (0..6000)
            .map(|i| 0.1 * (PI * k as f64 * i as f64 / 6000.0).sin().abs())
            .collect();
        got.push(count_speed_peaks(&speed, 1000.0).unwrap());
    }
    let pass = got.iter().enumerate().all(|(i, &n)| n == i + 1) && count_peaks(&[0.0, 1.0, 0.0], PEAK_PROMINENCE) == 1;
    outcome(pass, format!("NP for k = 1..6: {got:?}"))
}

fn wrap_half_turn(a: f64) -> f64 {
    let mut d = a % PI;
    if d > PI / 2.0 {
        d -= PI;
    }
    if d <= -PI / 2.0 {
        d += PI;
    }
    d
}

fn pca_ellipse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let rot = 30f64.to_radians();
    let (c, s) = (rot.cos(), rot.sin());
    let points: Vec<[f64; 2]> = (0..1000)
        .map(|_| {
            let u: f64 = rng.sample::<f64, _>(StandardNormal) * 3.0;
            let v: f64 = rng.sample::<f64, _>(StandardNormal);
            [c * u - s * v, s * u + c * v]
        })
        .collect();
    let base = pca2(&points).unwrap();
    let angle_err = wrap_half_turn(base.angle - rot).abs().to_degrees();

    let shift = [3.7, -1.2];
    let moved: Vec<[f64; 2]> = points.iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
    let t = pca2(&moved).unwrap();
    let phi = 40f64.to_radians();
    let (cp, sp) = (phi.cos(), phi.sin());
    let turned: Vec<[f64; 2]> = points.iter().map(|p| [cp * p[0] - sp * p[1], sp * p[0] + cp * p[1]]).collect();
    let r = pca2(&turned).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);

    let e0 = strategy_ellipse(&points);
    let et = strategy_ellipse(&moved);
    let er = strategy_ellipse(&turned);
    let translation = wrap_half_turn(t.angle - base.angle).abs()
        .max(rel(t.eigvals[0], base.eigvals[0]))
        .max(rel(t.eigvals[1], base.eigvals[1]))
        .max((t.mean[0] - base.mean[0] - shift[0]).abs())
        .max((t.mean[1] - base.mean[1] - shift[1]).abs())
        .max((et.half_width - e0.half_width).abs())
        .max((et.half_height - e0.half_height).abs());
    let rotation = wrap_half_turn(r.angle - base.angle - phi).abs()
        .max(rel(r.eigvals[0], base.eigvals[0]))
        .max(rel(r.eigvals[1], base.eigvals[1]))
        .max((er.half_width - e0.half_width).abs())
        .max((er.half_height - e0.half_height).abs());
    let pass = angle_err <= 5.0 && translation <= 1e-9 && rotation <= 1e-9 && !base.unstable;
    outcome(
        pass,
        format!(
            "rotation {:.3} deg (error {angle_err:.3} deg); translation deviation {translation:.2e}; rotation deviation {rotation:.2e}",
            base.angle.to_degrees()
        ),
    )
}

/// Feeds scripted ball positions (one per ms, level board) to a trial.
fn trace(protocol: &mut TrialProtocol, positions: impl IntoIterator<Item = f64>, tick: &mut u64) -> Vec<ProtocolEvent> {
    let params = SimParams::default();
    let mut events = Vec::new();
    for p in positions {
        *tick += 1;
        let state = SimState { t: *tick as f64 * params.dt, p_ball: p, ..SimState::default() };
        events.extend(protocol.protocol_step(&state, &params));
    }
    events
}

fn protocol() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut check = |cond: bool, what: &str| {
        if !cond {
            ok = false;
            notes.push(what.to_string());
        }
    };

    for counterbalance in [false, true] {
        let schedule = build_schedule(counterbalance);
        check(validate_schedule(&schedule).is_ok(), "schedule rejected");
        check(schedule.blocks.len() == 18, "block count");
        for performer in [Performer::ParticipantA, Performer::ParticipantB, Performer::Dyad] {
            let flags: Vec<bool> =
                schedule.blocks.iter().filter(|b| b.performer == performer).map(|b| b.condition.haptic).collect();
            check(flags.windows(2).all(|w| w[0] != w[1]), "haptic alternation");
            for haptic in [true, false] {
                let n: u32 = schedule
                    .blocks
                    .iter()
                    .filter(|b| b.performer == performer && b.condition.haptic == haptic)
                    .map(|b| b.trials_required)
                    .sum();
                check(n == 180, "180 trials per cell");
            }
        }
    }

    let params = SimParams::default();
    let settings = ProtocolSettings::default();
    let config = TrialConfig {
        target_side: Side::Right,
        dwell_required: DWELL_REQUIRED_S,
        condition: Condition { mode: Mode::Dyadic, haptic: true },
        trial_index: 0,
        block_index: 8,
    };
    let gate = (settings.gate_hold / params.dt).round() as u64;
    let dwell = (DWELL_REQUIRED_S / params.dt).round() as u64;

    // gate, fall off the left edge, gate again, then a dwell that is broken
    // once before it completes
    let mut tp = TrialProtocol::new(config, settings, &params);
    let mut tick = 0;
    let ev = trace(&mut tp, std::iter::repeat_n(-0.15, gate as usize), &mut tick);
    check(matches!(ev.as_slice(), [ProtocolEvent::TrialStarted { .. }]) && tick == gate, "gate release");
    let ev = trace(&mut tp, (1..=300).map(|i| -0.15 - i as f64 * 1e-3), &mut tick);
    check(matches!(ev.as_slice(), [ProtocolEvent::Failed { n_failures: 1, .. }]), "fall off");
    check(tp.phase() == TrialPhase::Failed, "failed phase");
    tp.restart();
    let released_at = tick + gate;
    trace(&mut tp, std::iter::repeat_n(-0.15, gate as usize), &mut tick);
    check(tp.start_time() == Some(released_at as f64 * params.dt), "second release");
    // 1 m/s toward the target: enters at 0.115 m, 265 ms later
    let ev = trace(&mut tp, (1..=265).map(|i| -0.15 + i as f64 * 1e-3), &mut tick);
    check(matches!(ev.last(), Some(ProtocolEvent::EnteredTarget { .. })), "entry");
    trace(&mut tp, std::iter::repeat_n(0.13, 500), &mut tick);
    let ev = trace(&mut tp, std::iter::once(0.10), &mut tick);
    check(matches!(ev.as_slice(), [ProtocolEvent::LeftTarget { .. }]), "dwell broken");
    let reentry = tick + 1;
    trace(&mut tp, std::iter::once(0.15), &mut tick);
    let ev = trace(&mut tp, std::iter::repeat_n(0.15, dwell as usize), &mut tick);
    match ev.as_slice() {
        [ProtocolEvent::Succeeded { t, completion_time, n_failures: 1 }] => {
            let want_ct = (reentry - released_at) as f64 * params.dt;
            check((completion_time - want_ct).abs() < 1e-9, "completion time from re-entry");
            check((t - (reentry + dwell) as f64 * params.dt).abs() < 1e-9, "dwell length");
        }
        _ => check(false, "success after dwell"),
    }

    // targets alternate within a played block
    let block = Block {
        index: 8,
        performer: Performer::Dyad,
        condition: Condition { mode: Mode::Dyadic, haptic: true },
        trials_required: 4,
    };
    let agents = AgentPair::default().for_block(Performer::Dyad);
    let records = run_block(&agents, block, &params, &RunSettings::default()).unwrap();
    let sides: Vec<Side> = records.iter().map(|r| r.config.target_side).collect();
    check(sides.windows(2).all(|w| w[0] != w[1]) && sides.len() == 4, "target alternation");

    let detail = if notes.is_empty() {
        format!("18-block schedules valid both ways, 180 trials per cell, scripted dwell/failure/alternation traces match (targets {sides:?})")
    } else {
        format!("failed checks: {}", notes.join(", "))
    };
    outcome(ok, detail)
}

fn directional() -> Outcome {
    let start = Instant::now();
    let params = SimParams::default();
    let pair = AgentPair::default();
    let settings = RunSettings { seed: 1, ..RunSettings::default() };
    let schedule = build_schedule(false);
    let logs: Vec<BlockLog> = schedule
        .blocks
        .par_iter()
        .map(|b| {
            let trials = run_block(&pair.for_block(b.performer), *b, &params, &settings).unwrap();
            BlockLog::new("accept", *b, params, serde_json::Value::Null, trials)
        })
        .collect();
    let analyzed: Vec<_> = logs.par_iter().map(|l| analyze_log(l).unwrap()).collect();
    let (mut trials, mut segments) = (Vec::new(), Vec::new());
    for (t, s) in analyzed {
        trials.extend(t);
        segments.extend(s);
    }
    let report = report_from_rows(&trials, &segments);
    let ct = |c: &str| report.condition(c).and_then(|s| s.completion_time.mean).unwrap_or(f64::NAN);
    let n = |c: &str| report.condition(c).map_or(0, |s| s.n_trials);
    let coop = |c: &str| report.shares_for(c).map_or(f64::NAN, |s| s.cooperative);
    let delay = |c: &str| {
        report.delay_for(c).map_or(f64::NAN, |d| {
            [d.delay_10, d.delay_20, d.delay_30, d.delay_40].iter().map(|v| v.unwrap_or(f64::NAN)).sum::<f64>() / 4.0
        })
    };
    let enough = ["bimanual_on", "bimanual_off", "dyadic_on", "dyadic_off"].iter().all(|c| n(c) >= 180);
    let secs = start.elapsed().as_secs_f64();
    let pass = enough
        && ct("dyadic_on") < ct("dyadic_off")
        && coop("dyadic_on") > coop("dyadic_off")
        && delay("dyadic_on") < delay("dyadic_off")
        && delay("bimanual_on") < delay("dyadic_on")
        && delay("bimanual_off") < delay("dyadic_off")
        && secs < 600.0;
    outcome(
        pass,
        format!(
            "dyad on/off: ct {:.3}/{:.3} s, cooperative {:.3}/{:.3}, delay {:.1}/{:.1} ms; bimanual delay {:.1}/{:.1} ms; {} trials per condition; {secs:.1} s",
            ct("dyadic_on"),
            ct("dyadic_off"),
            coop("dyadic_on"),
            coop("dyadic_off"),
            delay("dyadic_on") * 1e3,
            delay("dyadic_off") * 1e3,
            delay("bimanual_on") * 1e3,
            delay("bimanual_off") * 1e3,
            n("dyadic_on"),
        ),
    )
}

fn simulate_into(dir: &std::path::Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_boardball"))
        .args(["simulate", "--seed", "7", "--trials-per-block", "3", "--out"])
        .arg(dir)
        .output()
        .is_ok_and(|o| o.status.success())
}

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

/// A dyadic session played by two agents over wire messages, one joining
/// late, persisted to `dir`.
fn recorded_session(dir: &std::path::Path) -> (String, String) {
    let params = SimParams::default();
    let block = Block {
        index: 10,
        performer: Performer::Dyad,
        condition: Condition { mode: Mode::Dyadic, haptic: false },
        trials_required: 3,
    };
    let mut session = Session::new("live", block, params, ProtocolSettings::default());
    let mut left = Agent::new(AgentConfig::default().with_side(AgentSide::Left), &params, 5, 0);
    let mut right = Agent::new(AgentConfig::default().with_side(AgentSide::Right), &params, 5, 1);
    let join = |role| WireMessage::Join { session: "live".into(), role };
    session.assign_role(1, &join(Role::Left));
    let (mut tick, mut seq) = (0u64, [0u64; 2]);
    while !session.is_finished() && tick < 600_000 {
        if tick == 500 {
            session.assign_role(2, &join(Role::Right));
        }
        let r = session.runner();
        let obs = AgentObservation::new(r.state(), r.phase(), r.trial_config().target_side, None);
        let (zl, zr) = (left.command(&obs).left.unwrap(), right.command(&obs).right.unwrap());
        if tick % 9 == 0 {
            seq[0] += 1;
            session.handle(1, &WireMessage::Input { seq: seq[0], t_client: tick as f64, z: InputHeight::One(zl) });
        }
        if tick % 13 == 4 && tick >= 500 {
            seq[1] += 1;
            session.handle(2, &WireMessage::Input { seq: seq[1], t_client: tick as f64, z: InputHeight::One(zr) });
        }
        session.tick().unwrap();
        tick += 1;
    }
    let summary = session.persist(dir);
    (summary.files[0].clone(), summary.files[2].clone())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ran = simulate_into(&a) && simulate_into(&b);
    let (fa, fb) = if ran { (files(&a), files(&b)) } else { (Vec::new(), Vec::new()) };
    let n_logs = fa.iter().filter(|(n, _)| n.ends_with(".jsonl")).count();
    let identical = ran && n_logs == 18 && fa == fb;

    let live = tmp.path().join("live");
    let (log_name, transcript_name) = recorded_session(&live);
    let log = BlockLog::read(&live.join(log_name)).unwrap();
    let transcript = TranscriptFile::read(&live.join(transcript_name)).unwrap();
    let replayed = transcript.replay().unwrap();
    let mut frames = 0usize;
    let mut exact = log.trials.len() == replayed.records().len() && !log.trials.is_empty();
    for (x, y) in log.trials.iter().zip(replayed.records()) {
        exact &= x.frames.len() == y.frames.len() && x.outcome == y.outcome;
        for (f, g) in x.frames.iter().zip(&y.frames) {
            frames += 1;
            let fa = serde_json::to_value(f).unwrap();
            let ga = serde_json::to_value(g).unwrap();
            exact &= fa == ga && f.t.to_bits() == g.t.to_bits() && f.p_ball.to_bits() == g.p_ball.to_bits();
        }
    }
    outcome(
        identical && exact,
        format!(
            "two seeded runs: {n_logs} logs, {} files byte-identical: {}; transcript replay of {} trials / {frames} frames bit-exact: {exact}",
            fa.len(),
            identical,
            log.trials.len()
        ),
    )
}

type Check = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let checks: [Check; 11] = [
        ("statics", statics),
        ("kinematics", kinematics),
        ("filter", filter),
        ("classification", classification),
        ("segmentation", segmentation),
        ("delay recovery", delay_recovery),
        ("peak count", peak_count),
        ("PCA ellipse", pca_ellipse),
        ("protocol", protocol),
        ("directional reproduction", directional),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} acceptance criteria passed", checks.len() - failed, checks.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
