import pytest

from securetime.adversary import STRATEGIES, flip_bit, make_adversary
from securetime.analysis import check, compute_bounds, evaluate
from securetime.receiver import ALARM_TIMEOUT
from securetime.scenario import build_simulation, parse_scenario

BASE = """
delta_min = 0
delta_max = 1ms
rho_max = 50ppm
scheme = test
drift = 20ppm
initial_offset = 2ms
sync_interval = 1s
horizon = 60s
seed = 3
"""


def scenario_text(base=BASE, **over):
    lines = [ln for ln in base.strip().splitlines() if ln.split("=", 1)[0].strip() not in over]
    lines += [f"{k.replace('__', '.')} = {v}" for k, v in over.items()]
    return "\n".join(lines)


def run(base=BASE, **over):
    sim = build_simulation(parse_scenario(scenario_text(base, **over)))
    trace = sim.run()
    return sim, trace, evaluate(trace)


def test_registry_and_factory():
    assert {"passthrough", "bitflip", "replay", "cross-session-replay", "request-drop",
            "optimal-delay", "preplay-flood"} <= set(STRATEGIES)
    with pytest.raises(ValueError):
        make_adversary("nope")
    with pytest.raises(ValueError):
        make_adversary("optimal-delay", mode="sideways")


def test_flip_bit_is_an_involution():
    data = bytes(range(16))
    for bit in (0, 7, 8, 127):
        once = flip_bit(data, bit)
        assert once != data and flip_bit(once, bit) == data
        assert sum(bin(a ^ b).count("1") for a, b in zip(once, data)) == 1


@pytest.mark.parametrize("mode", ["1-step", "2-step"])
def test_bitflip_never_accepted(mode):
    sim, trace, rep = run(adversary="bitflip", mode=mode)
    assert sim.adversary.flipped > 50
    assert rep.adversarial_events == sim.adversary.flipped
    assert rep.forged_accepted == 0
    modified = [r for r in trace.records if r.info.get("origin") == "modify"]
    assert modified and all(r.info["verdict"] != "accepted" for r in modified)
    # Originals still get through, so the receiver keeps synchronizing.
    assert rep.corrections_applied > 10


def test_flipped_unsigned_nonce_buffers_but_never_validates():
    sim, trace, rep = run(adversary="bitflip", mode="2-step", adversary__flip_unsigned="true")
    forged_syncs = [r for r in trace.records if r.info.get("origin") == "modify" and r.kind == "sync2"]
    assert forged_syncs and all(r.info["verdict"] in ("buffered", "discarded") for r in forged_syncs)
    assert sum(r.info["verdict"] == "buffered" for r in forged_syncs) > len(forged_syncs) // 2
    forged_digests = {r.info["dig"] for r in forged_syncs}
    for r in trace.records:
        for part in str(r.info.get("acc", "")).split(","):
            assert part.partition("@")[0] not in forged_digests
    assert rep.forged_accepted == 0


@pytest.mark.parametrize("mode", ["1-step", "2-step"])
def test_replays_never_accepted(mode):
    sim, trace, rep = run(adversary="replay", mode=mode)
    replayed = [r for r in trace.records if r.info.get("origin") == "replay"]
    assert len(replayed) > 50
    assert rep.replays_accepted == 0 and rep.forged_accepted == 0
    assert all(r.info["verdict"] != "accepted" or r.kind == "announce" for r in replayed)


def test_cross_session_replay_never_accepted():
    sim, trace, rep = run(adversary="cross-session-replay", rotation_threshold=8, horizon="40s", mode="2-step")
    assert sim.adversary.replayed > 20
    assert rep.replays_accepted == 0 and rep.forged_accepted == 0
    reasons = {r.info.get("reason") for r in trace.records if r.info.get("origin") == "replay"}
    assert reasons & {"wrong-session", "retired-session", "stale-seq", "duplicate"}


def test_request_drop_raises_timeout():
    sim, trace, rep = run(adversary="request-drop", adversary__after=1, horizon="100s")
    drops = [r for r in trace.records if r.kind == "mediate" and r.info["act"] == "drop"]
    assert drops and rep.first_alarm_kind == ALARM_TIMEOUT
    # The deadline is 2*delta_max of local time after the dropped request;
    # a drifting clock shifts that by up to 2*delta_max*rho_max in true time.
    net = sim.config.net
    expected = drops[0].time + 2 * net.delta_max
    slack = int(2 * net.delta_max * net.rho_max) + 1
    assert expected - slack <= rep.first_alarm_at <= expected + slack
    assert check(rep, compute_bounds(sim.config.net), 2000).passed


def test_optimal_delay_unnoticed_stays_within_eps_1():
    base = BASE.replace("drift = 20ppm", "drift = 0ppm").replace("initial_offset = 2ms", "initial_offset = -1s")
    sim, trace, rep = run(base, adversary="optimal-delay", sync_interval="100ms", horizon="8 intervals")
    b = compute_bounds(sim.config.net)
    assert rep.alarms == 0
    assert b.eps_m < rep.max_unnoticed_offset <= b.eps_1


def test_optimal_delay_detect_alarms_within_eps_2():
    base = BASE.replace("drift = 20ppm", "drift = 0ppm").replace("initial_offset = 2ms", "initial_offset = -1s")
    sim, trace, rep = run(base, adversary="optimal-delay", adversary__mode="detect", stop_on_alarm="true",
                          sync_interval="100ms", horizon="20 intervals")
    b = compute_bounds(sim.config.net)
    assert rep.first_alarm_at is not None
    assert rep.offset_at_first_alarm <= b.eps_2


def test_preplay_with_full_nonce_space_never_succeeds():
    sim, trace, rep = run(adversary="preplay-flood", mode="2-step", adversary__k="32", horizon="30s")
    trials = sim.adversary.trials
    assert len(trials) >= 20 and all(buffered > 0 for _, buffered, _ in trials)
    assert rep.forged_accepted == 0 and rep.corrections_applied == 0


def test_bootstrap_followup_bounds_the_attacker_by_one_spread():
    # A receiver that re-measures right after bootstrapping is synchronized
    # only with |offset| <= W, which caps the unnoticed peak at 2W.
    base = BASE.replace("drift = 20ppm", "drift = 0ppm").replace("initial_offset = 2ms", "initial_offset = -1s")
    sim, trace, rep = run(base, adversary="optimal-delay", bootstrap_followup="true",
                          sync_interval="100ms", horizon="8 intervals")
    b = compute_bounds(sim.config.net)
    assert rep.alarms == 0
    assert b.eps_m * 9 // 10 < rep.max_unnoticed_offset <= b.eps_m
