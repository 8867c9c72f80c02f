#!/usr/bin/env python3
"""
Tests for moral-sim

Covers config loading, world mechanics, action resolution, the engine loop with
checkpoints and resume, the LLM decision loop against a local fake endpoint,
run analysis, the mini-game harness and the CLI.
"""

import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from itertools import product
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import moral_sim.settings as env_settings
from moral_sim.actions import (
    P_MAX,
    P_MIN,
    resolve_action,
    resolve_allocate,
    resolve_collect,
    resolve_communicate,
    resolve_fight,
    resolve_hunt,
    resolve_reproduce,
    resolve_rob,
    success_probability,
)
from moral_sim.analysis import (
    build_networks,
    compute_action_distributions,
    compute_hp_attribution,
    compute_hunt_traces,
    compute_lifespans,
    compute_mortality,
    compute_population_series,
    emit_report,
    get_agent_profile,
    get_collaboration_trace,
    get_global_observations,
    get_population_data,
    judge_moral_types,
)
from moral_sim.analysis.judge import behavior_digest
from moral_sim.analysis.metrics import TYPE_NAMES, PopulationSeries, build_roster
from moral_sim.analysis.report import load_metric_table
from moral_sim.archive import RunArchive
from moral_sim.cli import main
from moral_sim.cognition import ScriptedBackend, assemble_observation, policy_decide
from moral_sim.cognition.schema import (
    STRATEGIES_KEY,
    ActionRequest,
    PolicyResponse,
    parse_policy_response,
)
from moral_sim.cognition.validation import contextual_errors
from moral_sim.config import (
    apply_variant,
    baseline_config,
    config_hash,
    config_to_dict,
    load_config,
    load_config_file,
)
from moral_sim.engine import (
    MAX_TIME_STEPS,
    POPULATION_COLLAPSE,
    check_termination,
    resume_simulation,
    round_phases,
    run_simulation,
)
from moral_sim.errors import (
    ArchiveError,
    CheckpointError,
    ConfigError,
    DecisionFailure,
    ResponseFormatError,
    ScenarioError,
    TransportError,
)
from moral_sim.llm import (
    ChatClient,
    ChatExchange,
    LLMJudge,
    LLMPolicy,
    PromptAssets,
    TranscriptReplayClient,
    build_messages,
    decide_with_validation,
    render_system_prompt,
    replay_policy,
)
from moral_sim.llm.judge import parse_judgement
from moral_sim.llm.prompts import render_reflection, template_values
from moral_sim.minigames import (
    ScenarioSpec,
    load_scenario,
    load_scenario_file,
    run_allocation_target_game,
    run_custom_game,
    run_hp_sharing_game,
    run_invitation_game,
)
from moral_sim.models import (
    PRODUCTION_ACTIONS,
    SOCIAL_ACTIONS,
    ActionKind,
    DeathCause,
    MoralType,
    PlantNode,
    PreyAnimal,
    RoundKind,
    RoundPhase,
)
from moral_sim.responses import make_error, make_response
from moral_sim.world import (
    WorldState,
    allocate_moral_types,
    environment_update,
    initialize_world,
    populate_resources,
    restore,
    snapshot,
)

ROOT = Path(__file__).parent

# =============================================================================
# Test Fixtures
# =============================================================================


def _world(config=None, step=1):
    return WorldState(config=config or baseline_config(), rng=np.random.default_rng(0), step=step)


def _agent(state, agent_id, moral_type=MoralType.UNIVERSAL, hp=20, age=10, pa=6.0, parent_id=None):
    return state.add_agent(
        moral_type, hp=hp, age=age, physical_ability=pa, parent_id=parent_id, agent_id=agent_id
    )


def _prey(state, prey_id="prey_1", hp=10, max_hp=10):
    prey = PreyAnimal(
        prey_id=prey_id,
        hp=hp,
        max_hp=max_hp,
        physical_ability=4.0,
        counter_damage=4,
        num_agents_to_kill=3,
    )
    state.prey[prey_id] = prey
    return prey


def _never():
    raise AssertionError("no random draw expected")


def _social(step=1):
    return RoundPhase(step, 0, RoundKind.SOCIAL, SOCIAL_ACTIONS)


def _production(step=1):
    return RoundPhase(step, 2, RoundKind.PRODUCTION, PRODUCTION_ACTIONS)


def _no_reflection(**overrides):
    return baseline_config(llm={"reflection_enabled": False}, **overrides)


def _bundle(config):
    """Observation for a universal agent_1 facing a selfish agent_2 in a social round."""
    state = _world(config)
    _agent(state, "agent_1", MoralType.UNIVERSAL)
    _agent(state, "agent_2", MoralType.SELFISH)
    populate_resources(state)
    return assemble_observation(state, "agent_1", round_phases(config, 1)[0])


def _valid_text(bundle):
    return json.dumps(ScriptedBackend().decide(bundle).to_document())


class FakeChatClient:
    """In-process stand-in for ChatClient that returns canned replies."""

    def __init__(self, replies, model="fake-model"):
        self.replies = list(replies)
        self.model = model
        self.temperature = 0.0
        self.timeout = 1.0
        self.calls = []

    def chat_completion(self, messages):
        self.calls.append([dict(m) for m in messages])
        if not self.replies:
            raise TransportError("no more replies")
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


class _ChatHandler(BaseHTTPRequestHandler):
    """Chat-completions endpoint that serves (status, content, delay) replies in order."""

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.server.requests.append(json.loads(self.rfile.read(length)))
        status, content, delay = (
            self.server.replies.pop(0) if self.server.replies else (500, "empty", 0.0)
        )
        if delay:
            time.sleep(delay)
        if status == 200:
            body = {"choices": [{"message": {"role": "assistant", "content": content}}]}
            payload = json.dumps(body).encode("utf-8")
        else:
            payload = content.encode("utf-8")
        try:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def log_message(self, format, *args):
        pass


@pytest.fixture
def chat_server():
    """A local chat-completions endpoint on a free port."""
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
    server.replies = []
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


def _server_client(server, timeout=5.0):
    host, port = server.server_address[:2]
    return ChatClient(
        base_url=f"http://{host}:{port}", model="test-model", timeout=timeout, http_retries=0
    )


@pytest.fixture(scope="module")
def scripted_run(tmp_path_factory):
    """An eight-step scripted run of the baseline config."""
    config = baseline_config(max_time_steps=8)
    archive = RunArchive.create(config, run_dir=tmp_path_factory.mktemp("runs") / "run")
    return run_simulation(config, ScriptedBackend(), archive)


class OracleJudge:
    """Judge that always knows the true moral type."""

    kind = "oracle"

    def __init__(self, roster, fail_for=()):
        self.types = {agent_id: record.moral_type for agent_id, record in roster.items()}
        self.fail_for = set(fail_for)

    def judge(self, agent_id, digest):
        if agent_id in self.fail_for:
            raise ResponseFormatError("judge refused")
        return {t: 1.0 if t == self.types[agent_id] else 0.0 for t in TYPE_NAMES}


# =============================================================================
# Configuration
# =============================================================================


class TestConfig:
    """Tests for config validation, variants and the shipped documents."""

    def test_baseline_document_matches_builtin(self):
        assert load_config_file(ROOT / "configs" / "baseline.json") == baseline_config()

    def test_distribution_must_sum_to_one(self):
        with pytest.raises(ConfigError, match="type_distribution") as exc:
            baseline_config(type_distribution={"universal": 0.5, "selfish": 0.3})
        assert exc.value.field == "type_distribution"

    def test_initial_hp_bounded_by_max(self):
        with pytest.raises(ConfigError, match="initial_hp"):
            baseline_config(initial_hp=50)

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            baseline_config(max_timesteps=10)

    def test_invalid_json(self):
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config("{not json")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="Cannot read"):
            load_config_file(tmp_path / "missing.json")

    def test_resource_variants(self):
        base = baseline_config()
        assert apply_variant(base, "scarce_resource").resource_abundance == 1.0
        assert apply_variant(base, "abundant_resource").resource_abundance == 3.0
        assert apply_variant(base, "high_social_cost").social_rounds_per_step == 1
        assert apply_variant(base, "moral_invisible").moral_type_visible is False
        assert apply_variant(base, "baseline") is base

    def test_single_type_variant(self):
        config = apply_variant(baseline_config(), "single_type(kin)")
        assert config.type_distribution[MoralType.KIN] == 1.0
        assert config.type_distribution[MoralType.SELFISH] == 0.0
        colon_form = apply_variant(baseline_config(), "single_type:selfish")
        assert colon_form.type_distribution[MoralType.SELFISH] == 1.0

    def test_unknown_variant(self):
        with pytest.raises(ConfigError, match="Unknown variant"):
            apply_variant(baseline_config(), "famine")
        with pytest.raises(ConfigError, match="Unknown moral type"):
            apply_variant(baseline_config(), "single_type(saint)")

    def test_abundance_scales_resource_counts(self):
        config = baseline_config()
        assert config.plant_node_count == 8
        assert config.prey_initial_count == 8
        assert config.prey_max_count == 12

    def test_hash_tracks_content(self):
        assert config_hash(baseline_config()) == config_hash(baseline_config())
        assert config_hash(baseline_config()) != config_hash(baseline_config(rng_seed=7))


# =============================================================================
# Environment Settings
# =============================================================================


class TestSettings:
    """Tests for process-level environment settings."""

    def test_invalid_worker_count_falls_back(self, monkeypatch):
        monkeypatch.setenv("MORALSIM_PARALLEL_WORKERS", "many")
        assert env_settings.parallel_workers() == 4

    def test_api_key_fallback(self, monkeypatch):
        monkeypatch.delenv("MORALSIM_API_KEY", raising=False)
        monkeypatch.setenv("OPENAI_API_KEY", "sk-fallback")
        assert env_settings.api_key() == "sk-fallback"
        monkeypatch.setenv("MORALSIM_API_KEY", "sk-primary")
        assert env_settings.api_key() == "sk-primary"

    def test_runs_dir(self, monkeypatch, tmp_path):
        monkeypatch.setenv("MORALSIM_RUNS_DIR", str(tmp_path))
        assert env_settings.runs_dir() == tmp_path


# =============================================================================
# World
# =============================================================================


class TestWorld:
    """Tests for initialization, the environment update and checkpoints."""

    def test_initial_population(self):
        state = initialize_world(baseline_config())
        counts = state.population_by_type()
        assert all(n == 2 for n in counts.values())
        assert sorted(state.agents) == sorted(f"agent_{i}" for i in range(1, 9))
        assert len(state.plants) == 8
        assert len(state.prey) == 8
        assert sorted(state.queue) == sorted(state.agents)

    def test_same_seed_same_world(self):
        first = snapshot(initialize_world(baseline_config())).to_json()
        second = snapshot(initialize_world(baseline_config())).to_json()
        assert first == second
        other = snapshot(initialize_world(baseline_config(rng_seed=9))).to_json()
        assert other != first

    def test_largest_remainder_tie_break(self):
        even = {t: 0.25 for t in MoralType.ordered()}
        types = allocate_moral_types(even, 5)
        assert types.count(MoralType.UNIVERSAL) == 2
        assert len(types) == 5

    def test_old_age_death(self):
        state = _world()
        _agent(state, "agent_1", age=20, hp=20)
        environment_update(state)
        agent = state.agents["agent_1"]
        assert not agent.alive
        assert agent.death_cause == DeathCause.OLD_AGE.value
        death = state.events[-1]
        assert death.parameters["cause"] == "old_age"
        assert death.hp_deltas == {"agent_1": -19}

    def test_starvation(self):
        state = _world()
        _agent(state, "agent_1", hp=1)
        environment_update(state)
        assert state.agents["agent_1"].death_cause == DeathCause.STARVATION.value

    def test_plant_regrowth_and_respawn(self):
        state = _world()
        state.plants["plant_1"] = PlantNode("plant_1", 0, 3, 3, 10, steps_until_respawn=1)
        state.plants["plant_2"] = PlantNode("plant_2", 1, 3, 3, 10)
        environment_update(state)
        assert state.plants["plant_1"].quantity == 3
        assert not state.plants["plant_1"].depleted
        assert state.plants["plant_2"].quantity == 2

    def test_family_relations(self):
        state = _world()
        _agent(state, "agent_1")
        _agent(state, "agent_2", parent_id="agent_1")
        _agent(state, "agent_3", parent_id="agent_1")
        _agent(state, "agent_4", parent_id="agent_2")
        assert state.family_relations("agent_2") == {
            "agent_1": "parent",
            "agent_3": "sibling",
            "agent_4": "child",
        }
        assert state.family_relations("agent_1")["agent_4"] == "grandchild"

    def test_checkpoint_round_trip(self):
        config = baseline_config()
        state = initialize_world(config)
        environment_update(state)
        checkpoint = snapshot(state)
        restored = restore(type(checkpoint).from_json(checkpoint.to_json()), config, state.events)
        assert snapshot(restored).to_json() == checkpoint.to_json()
        assert restored.rng.random() == state.rng.random()

    def test_checkpoint_rejects_other_config(self):
        state = initialize_world(baseline_config())
        with pytest.raises(CheckpointError, match="does not match"):
            restore(snapshot(state), baseline_config(rng_seed=1), state.events)

    def test_checkpoint_rejects_short_log(self):
        config = baseline_config()
        state = initialize_world(config)
        with pytest.raises(CheckpointError, match="incomplete"):
            restore(snapshot(state), config, state.events[:2])

    @given(
        st.lists(st.integers(0, 10), min_size=4, max_size=4).filter(lambda w: sum(w) > 0),
        st.integers(0, 40),
    )
    def test_allocation_matches_quotas(self, weights, count):
        distribution = {t: w / sum(weights) for t, w in zip(MoralType.ordered(), weights)}
        types = allocate_moral_types(distribution, count)
        assert len(types) == count
        for moral_type in MoralType.ordered():
            assert abs(types.count(moral_type) - distribution[moral_type] * count) < 1


# =============================================================================
# Action Resolution
# =============================================================================


class TestSuccessProbability:
    """Tests for the clipped tanh success function."""

    def test_even_match(self):
        assert success_probability(0.0, 0.1, 5.0) == pytest.approx(0.6)

    def test_clipping(self):
        assert success_probability(100.0, 0.1, 5.0) == pytest.approx(P_MAX)
        assert success_probability(-100.0, 0.1, 5.0) == pytest.approx(0.2)
        assert success_probability(-100.0, -0.5, 5.0) == pytest.approx(P_MIN)

    def test_zero_slope(self):
        with pytest.raises(ValueError, match="slope"):
            success_probability(1.0, 0.1, 0.0)

    @given(st.floats(-50, 50), st.floats(0, 10), st.floats(0.5, 10))
    def test_bounded_and_monotone(self, delta, step, slope):
        low = success_probability(delta, 0.1, slope)
        high = success_probability(delta + step, 0.1, slope)
        assert P_MIN <= low <= P_MAX
        assert high >= low

    @pytest.mark.parametrize(
        "delta, intercept, slope, expected",
        [(0, 0.0, 5.0, 0.5), (2, 0.1, 5.0, None), (-2, 0.1, 5.0, None), (10, 0.1, 5.0, P_MAX)],
    )
    def test_fight_outcomes_match_probability(self, delta, intercept, slope, expected):
        trials = 100_000
        config = baseline_config(pa_intercept=intercept, pa_slope=slope)
        state = WorldState(config=config, rng=np.random.default_rng(42), step=1)
        actor = _agent(state, "agent_1", pa=6.0 + delta)
        target = _agent(state, "agent_2", pa=6.0)
        p = success_probability(delta, intercept, slope)
        if expected is not None:
            assert p == pytest.approx(expected)

        hits = 0
        for _ in range(trials):
            actor.hp = target.hp = 40
            state.events.clear()
            hits += resolve_fight(state, "agent_1", "agent_2").event.success
        assert state.events[-1].draws[0]["p"] == pytest.approx(p)
        assert abs(hits / trials - p) <= 3 * np.sqrt(p * (1 - p) / trials)


class TestProduction:
    """Tests for collect, hunt and reproduce."""

    def test_collect(self):
        state = _world()
        actor = _agent(state, "agent_1", hp=20)
        state.plants["plant_1"] = PlantNode("plant_1", 4, 3, 3, 10)
        outcome = resolve_collect(state, "agent_1", "plant_1", 3)
        assert not outcome.nullified
        assert actor.hp == 29
        assert state.plants["plant_1"].quantity == 1
        assert outcome.event.hp_deltas == {"agent_1": 9}

    def test_collect_more_than_available(self):
        state = _world()
        actor = _agent(state, "agent_1", hp=20)
        state.plants["plant_1"] = PlantNode("plant_1", 2, 3, 3, 10)
        outcome = resolve_collect(state, "agent_1", "plant_1", 3)
        assert outcome.nullified
        assert actor.hp == 20
        assert state.plants["plant_1"].quantity == 2

    def test_collect_depletes(self):
        state = _world()
        _agent(state, "agent_1", hp=20)
        state.plants["plant_1"] = PlantNode("plant_1", 2, 3, 3, 10)
        resolve_collect(state, "agent_1", "plant_1", 2)
        assert state.plants["plant_1"].steps_until_respawn == 10
        again = resolve_collect(state, "agent_1", "plant_1", 1)
        assert again.event.failure_reason == "plant_1 is depleted"

    def test_hunt_kill_grants_full_reward(self):
        state = _world()
        actor = _agent(state, "agent_1", hp=20, pa=6.0)
        _prey(state, hp=6, max_hp=10)
        outcome = resolve_hunt(state, "agent_1", "prey_1", draw=lambda: 0.0)
        assert outcome.prey_killed
        assert "prey_1" not in state.prey
        assert actor.hp == 29
        assert outcome.event.hp_deltas == {"agent_1": 9, "prey_1": -6}
        assert outcome.event.parameters["reward"] == 10

    def test_hunt_wound(self):
        state = _world()
        _agent(state, "agent_1", hp=20, pa=6.0)
        prey = _prey(state, hp=10, max_hp=10)
        outcome = resolve_hunt(state, "agent_1", "prey_1", draw=lambda: 0.0)
        assert not outcome.prey_killed
        assert prey.hp == 4
        assert outcome.event.parameters["killed"] is False

    def test_hunt_miss_takes_counter_damage(self):
        state = _world()
        actor = _agent(state, "agent_1", hp=20, pa=6.0)
        _prey(state)
        outcome = resolve_hunt(state, "agent_1", "prey_1", draw=lambda: 0.95)
        assert not outcome.event.success
        assert actor.hp == 15
        assert outcome.event.draws[0]["p"] == pytest.approx(0.6 + 0.4 * np.tanh(2.0 / 5.0))

    def test_hunt_cost_kills_before_any_draw(self):
        state = _world()
        actor = _agent(state, "agent_1", hp=1)
        _prey(state)
        outcome = resolve_hunt(state, "agent_1", "prey_1", draw=_never)
        assert outcome.actor_died
        assert actor.death_cause == DeathCause.ACTION_COST.value

    def test_reproduce(self):
        state = _world()
        parent = _agent(state, "agent_1", MoralType.KIN, hp=20, age=10)
        outcome = resolve_reproduce(state, "agent_1")
        child_id = outcome.event.parameters["child_id"]
        child = state.agents[child_id]
        assert parent.hp == 10
        assert child.hp == 3
        assert child.moral_type == MoralType.KIN
        assert child.parent_id == "agent_1"
        assert parent.children == [child_id]
        assert outcome.event.hp_deltas == {"agent_1": -10, child_id: 3}

    def test_reproduce_too_young(self):
        state = _world()
        _agent(state, "agent_1", age=3)
        outcome = resolve_reproduce(state, "agent_1")
        assert outcome.nullified
        assert len(state.agents) == 1

    def test_childbirth_death_keeps_child(self):
        state = _world(baseline_config(min_hp_repro=10, hp_cost_repro=10))
        _agent(state, "agent_1", hp=10)
        outcome = resolve_reproduce(state, "agent_1")
        assert outcome.actor_died
        assert state.agents["agent_1"].death_cause == DeathCause.CHILDBIRTH.value
        assert state.is_alive(outcome.event.parameters["child_id"])


class TestSocial:
    """Tests for allocate, fight, rob and communicate."""

    def test_allocate(self):
        state = _world()
        donor = _agent(state, "agent_1", hp=20)
        recipient = _agent(state, "agent_2", hp=5)
        outcome = resolve_allocate(state, "agent_1", {"agent_2": 5})
        assert donor.hp == 15
        assert recipient.hp == 10
        assert outcome.event.parameters["received"] == {"agent_2": 5}

    def test_allocate_needs_strictly_more(self):
        state = _world()
        donor = _agent(state, "agent_1", hp=5)
        _agent(state, "agent_2", hp=5)
        outcome = resolve_allocate(state, "agent_1", {"agent_2": 5})
        assert outcome.nullified
        assert donor.hp == 5

    def test_allocate_clamped_recipient_still_costs_full(self):
        state = _world()
        donor = _agent(state, "agent_1", hp=20)
        recipient = _agent(state, "agent_2", hp=38)
        outcome = resolve_allocate(state, "agent_1", {"agent_2": 5})
        assert donor.hp == 15
        assert recipient.hp == 40
        assert outcome.event.hp_deltas == {"agent_1": -5, "agent_2": 2}

    def test_allocate_to_self_nullified(self):
        state = _world()
        _agent(state, "agent_1", hp=20)
        outcome = resolve_allocate(state, "agent_1", {"agent_1": 5})
        assert outcome.event.failure_reason == "cannot target yourself"

    def test_fight_kill(self):
        state = _world()
        _agent(state, "agent_1", pa=6.0)
        _agent(state, "agent_2", hp=3, pa=6.0)
        outcome = resolve_fight(state, "agent_1", "agent_2", draw=lambda: 0.0)
        assert outcome.target_died
        death = state.events[-1]
        assert death.parameters == {"cause": "fight", "age": 10, "by": "agent_1"}

    def test_rob(self):
        state = _world()
        robber = _agent(state, "agent_1", hp=10)
        victim = _agent(state, "agent_2", hp=20)
        outcome = resolve_rob(state, "agent_1", "agent_2", 5, draw=lambda: 0.0)
        assert outcome.event.success
        assert robber.hp == 14
        assert victim.hp == 15

    def test_rob_more_than_target_holds(self):
        state = _world()
        robber = _agent(state, "agent_1", hp=10)
        _agent(state, "agent_2", hp=3)
        outcome = resolve_rob(state, "agent_1", "agent_2", 5, draw=_never)
        assert outcome.nullified
        assert robber.hp == 10

    def test_communicate_to_dead_agent(self):
        state = _world()
        _agent(state, "agent_1")
        _agent(state, "agent_2").alive = False
        outcome = resolve_communicate(state, "agent_1", ["agent_2"], "hello")
        assert outcome.event.failure_reason == "agent_2 is not alive"

    def test_communicate_length_limit(self):
        state = _world(baseline_config(message_max_length=10))
        _agent(state, "agent_1")
        _agent(state, "agent_2")
        outcome = resolve_communicate(state, "agent_1", ["agent_2"], "x" * 11)
        assert outcome.nullified
        ok = resolve_communicate(state, "agent_1", ["agent_2", "agent_2"], "hunt now")
        assert ok.deliveries == ["agent_2"]

    def test_illegal_kind_nullified_before_cost(self):
        state = _world()
        actor = _agent(state, "agent_1", hp=20)
        _prey(state)
        request = ActionRequest(kind=ActionKind.HUNT, actor_id="agent_1", target="prey_1")
        outcome = resolve_action(state, request, _social(), draw=_never)
        assert outcome.nullified
        assert actor.hp == 20

    @given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 40))
    def test_allocation_never_creates_hp(self, donor_hp, recipient_hp, amount):
        state = _world()
        donor = _agent(state, "agent_1", hp=donor_hp)
        recipient = _agent(state, "agent_2", hp=recipient_hp)
        outcome = resolve_allocate(state, "agent_1", {"agent_2": amount})
        if donor_hp <= amount:
            assert outcome.nullified
            assert (donor.hp, recipient.hp) == (donor_hp, recipient_hp)
        else:
            assert donor.hp == donor_hp - amount
            assert recipient.hp == min(40, recipient_hp + amount)
            assert sum(outcome.event.hp_deltas.values()) <= 0


def _reference_resolution(kind, a, b, prey, plant, hit):
    """Straight-line outcome of one action on the two-agent world, written from the rules.

    Actor: PA 6, age 10. Target agent_2 is dead when b is 0. Prey: PA 4, max HP 5,
    counter damage 4. Plant: 3 HP per unit. Collect and rob request 2, allocate gives 2.
    """
    out = {"a": a, "b": b, "prey": prey, "plant": plant, "success": True, "nullified": False}
    out["child"] = None

    def nullified():
        out.update(success=False, nullified=True)
        return out

    def pay_cost():
        out["a"] -= 1
        if out["a"] == 0:
            out["success"] = False
            return False
        return True

    if kind == ActionKind.COLLECT:
        if plant < 2:
            return nullified()
        out.update(a=min(40, a + 6), plant=plant - 2)
    elif kind == ActionKind.HUNT:
        if prey == 0:
            return nullified()
        if pay_cost():
            out["success"] = hit
            if hit:
                out["prey"] = None
                out["a"] = min(40, out["a"] + 5)
            else:
                out["a"] = max(0, out["a"] - 4)
    elif kind == ActionKind.REPRODUCE:
        if a < 3:
            return nullified()
        out.update(a=a - min(10, a), child=3)
    elif kind == ActionKind.ALLOCATE:
        if b == 0 or a <= 2:
            return nullified()
        out.update(a=a - 2, b=b + 2)
    elif kind == ActionKind.FIGHT:
        if b == 0:
            return nullified()
        if pay_cost():
            out["success"] = hit
            if hit:
                out["b"] = 0
    elif kind == ActionKind.ROB:
        if b < 2:
            return nullified()
        if pay_cost():
            out["success"] = hit
            if hit:
                out.update(a=out["a"] + 2, b=b - 2)
    elif kind == ActionKind.COMMUNICATE:
        if b == 0:
            return nullified()
    return out


_REFERENCE_REQUESTS = {
    ActionKind.COLLECT: {"target": "plant_1", "quantity": 2},
    ActionKind.HUNT: {"target": "prey_1"},
    ActionKind.REPRODUCE: {},
    ActionKind.ALLOCATE: {"allocation_plan": {"agent_2": 2}},
    ActionKind.FIGHT: {"target": "agent_2"},
    ActionKind.ROB: {"target": "agent_2", "quantity": 2},
    ActionKind.COMMUNICATE: {"recipients": ["agent_2"], "message": "hi"},
    ActionKind.DO_NOTHING: {},
}


class TestResolverReference:
    """Exhaustive comparison of every resolver against a straight-line reference."""

    @pytest.mark.parametrize("kind", list(_REFERENCE_REQUESTS))
    def test_matches_reference(self, kind):
        config = baseline_config(min_hp_repro=3)
        request = ActionRequest(kind=kind, actor_id="agent_1", **_REFERENCE_REQUESTS[kind])
        phase = _production() if kind in PRODUCTION_ACTIONS else _social()
        mismatches = []
        for a, b, prey, plant, hit in product(
            range(1, 6), range(6), range(6), range(6), (True, False)
        ):
            state = _world(config)
            _agent(state, "agent_1", hp=a)
            _agent(state, "agent_2", hp=b).alive = b > 0
            _prey(state, hp=prey, max_hp=5)
            state.plants["plant_1"] = PlantNode("plant_1", plant, 5, 3, 10)

            event = resolve_action(state, request, phase, draw=lambda: 0.0 if hit else 0.95).event
            child_id = event.parameters.get("child_id")
            observed = {
                "a": state.agents["agent_1"].hp,
                "b": state.agents["agent_2"].hp,
                "prey": state.prey["prey_1"].hp if "prey_1" in state.prey else None,
                "plant": state.plants["plant_1"].quantity,
                "success": event.success,
                "nullified": event.nullified,
                "child": state.agents[child_id].hp if child_id else None,
            }
            expected = _reference_resolution(kind, a, b, prey, plant, hit)
            if observed != expected:
                mismatches.append(((a, b, prey, plant, hit), observed, expected))
            assert state.agents["agent_1"].alive == (observed["a"] > 0)
        assert mismatches == []


# =============================================================================
# Policy Responses
# =============================================================================


class TestPolicyResponse:
    """Tests for schema parsing and contextual validation."""

    def test_prose_around_json(self):
        bundle = _bundle(baseline_config())
        response = parse_policy_response(f"Here is my answer\n{_valid_text(bundle)}\nThanks")
        assert response.agent_id == "agent_1"
        assert response.action.actor_id == "agent_1"

    def test_no_json(self):
        with pytest.raises(ResponseFormatError, match="no JSON object"):
            parse_policy_response("I will hunt")

    def test_missing_memory_section(self):
        document = json.loads(_valid_text(_bundle(baseline_config())))
        del document["long_term_memory"][STRATEGIES_KEY]
        with pytest.raises(ResponseFormatError, match="Strategies"):
            parse_policy_response(json.dumps(document))

    def test_thinking_word_cap(self):
        document = json.loads(_valid_text(_bundle(baseline_config())))
        document["thinking"] = "word " * 501
        with pytest.raises(ResponseFormatError, match="thinking"):
            parse_policy_response(json.dumps(document))

    def test_action_payload_must_match_kind(self):
        with pytest.raises(ValueError, match="collect requires quantity"):
            ActionRequest(kind=ActionKind.COLLECT, target="plant_1")
        with pytest.raises(ValueError, match="does not take"):
            ActionRequest(kind=ActionKind.HUNT, target="prey_1", quantity=2)

    def test_colon_in_message(self):
        bundle = _bundle(baseline_config())
        document = json.loads(_valid_text(bundle))
        document["action"]["message"] = "Plan: hunt prey_1"
        errors = contextual_errors(PolicyResponse.model_validate(document), bundle)
        assert any("colons" in e for e in errors)

    def test_illegal_action_for_round(self):
        bundle = _bundle(baseline_config())
        document = json.loads(_valid_text(bundle))
        document["action"] = {"kind": "hunt", "target": "prey_1"}
        errors = contextual_errors(PolicyResponse.model_validate(document), bundle)
        assert any("not legal" in e for e in errors)

    def test_memory_cap(self):
        bundle = _bundle(baseline_config(memory_cap_bytes=1024))
        document = json.loads(_valid_text(bundle))
        document["long_term_memory"][STRATEGIES_KEY] = "x" * 2000
        errors = contextual_errors(PolicyResponse.model_validate(document), bundle)
        assert any("long_term_memory" in e for e in errors)

    def test_policy_decide_rejects_wrong_agent(self):
        bundle = _bundle(baseline_config())

        class Impostor:
            kind = "test"

            def decide(self, b):
                document = json.loads(_valid_text(b))
                document["agent_id"] = "agent_2"
                document["action"].pop("actor_id", None)
                return PolicyResponse.model_validate(document)

        with pytest.raises(DecisionFailure, match="expected agent_1"):
            policy_decide(Impostor(), bundle)


# =============================================================================
# Observations
# =============================================================================


class TestObservation:
    """Tests for observation assembly."""

    def test_hidden_moral_types(self):
        bundle = _bundle(baseline_config(moral_type_visible=False))
        assert all("moral_type" not in other for other in bundle.other_agents)
        assert bundle.moral_type == "universal"

    def test_visible_moral_types(self):
        bundle = _bundle(baseline_config())
        assert bundle.other("agent_2")["moral_type"] == "selfish"

    def test_legal_actions_follow_round(self):
        config = baseline_config()
        state = _world(config)
        _agent(state, "agent_1")
        social, _, production = round_phases(config, 1)
        assert assemble_observation(state, "agent_1", social).legal_actions == [
            "allocate",
            "communicate",
            "fight",
            "rob",
            "do_nothing",
        ]
        assert assemble_observation(state, "agent_1", production).legal_actions == [
            "collect",
            "hunt",
            "reproduce",
            "do_nothing",
        ]

    def test_dead_agent_cannot_perceive(self):
        state = _world()
        _agent(state, "agent_1").alive = False
        with pytest.raises(ValueError, match="dead"):
            assemble_observation(state, "agent_1", _social())

    def test_perception_window_boundary(self):
        state = _world()
        _agent(state, "agent_1")
        _agent(state, "agent_2")
        for step in (5, 6, 20):
            state.step = step
            resolve_communicate(state, "agent_2", ["agent_1"], f"hello at {step}")
        bundle = assemble_observation(state, "agent_1", _social(step=20))
        assert bundle.window_start == 6
        assert [e["step"] for e in bundle.history["my_interactions"]] == [6, 20]


class TestScriptedPolicies:
    """Rule fixtures for the scripted backend, one per moral type."""

    def _decide(self, state, agent_id, phase=None):
        bundle = assemble_observation(state, agent_id, phase or _social())
        return ScriptedBackend().decide(bundle).action

    def test_selfish_collects_in_production(self):
        state = _world()
        _agent(state, "agent_1", MoralType.SELFISH, hp=14)
        populate_resources(state)
        action = self._decide(state, "agent_1", round_phases(state.config, 1)[-1])
        assert action.kind == ActionKind.COLLECT
        assert action.target in state.plants

    def test_selfish_robs_weakest_when_starving(self):
        state = _world()
        _agent(state, "agent_1", MoralType.SELFISH, hp=6)
        _agent(state, "agent_2", MoralType.UNIVERSAL, hp=25)
        _agent(state, "agent_3", MoralType.KIN, hp=9)
        action = self._decide(state, "agent_1")
        assert (action.kind, action.target, action.quantity) == (ActionKind.ROB, "agent_3", 4)

    def test_kin_gives_surplus_to_child_in_danger(self):
        state = _world()
        _agent(state, "agent_1", MoralType.KIN, hp=30)
        _agent(state, "agent_2", MoralType.KIN, hp=3, age=1, parent_id="agent_1")
        _agent(state, "agent_3", MoralType.UNIVERSAL, hp=2)
        action = self._decide(state, "agent_1")
        assert action.kind == ActionKind.ALLOCATE
        assert action.allocation_plan == {"agent_2": 10}

    def test_kin_never_robs_outsiders(self):
        state = _world()
        _agent(state, "agent_1", MoralType.KIN, hp=5)
        _agent(state, "agent_2", MoralType.SELFISH, hp=30)
        assert self._decide(state, "agent_1").kind == ActionKind.DO_NOTHING

    def test_reciprocal_ignores_zero_balance(self):
        state = _world()
        _agent(state, "agent_1", MoralType.RECIPROCAL, hp=30)
        _agent(state, "agent_2", MoralType.UNIVERSAL, hp=7)
        assert self._decide(state, "agent_1").kind == ActionKind.DO_NOTHING

    def test_reciprocal_returns_support(self):
        state = _world()
        _agent(state, "agent_1", MoralType.RECIPROCAL, hp=30)
        _agent(state, "agent_2", MoralType.SELFISH, hp=10)
        resolve_allocate(state, "agent_2", {"agent_1": 3})
        action = self._decide(state, "agent_1")
        assert action.kind == ActionKind.ALLOCATE
        assert action.allocation_plan == {"agent_2": 10}

    def test_reciprocal_never_retaliates(self):
        state = _world()
        _agent(state, "agent_1", MoralType.RECIPROCAL, hp=20)
        _agent(state, "agent_2", MoralType.SELFISH, hp=20)
        resolve_rob(state, "agent_2", "agent_1", 3, draw=lambda: 0.0)
        assert self._decide(state, "agent_1").kind == ActionKind.DO_NOTHING

    def test_universal_helps_weakest(self):
        state = _world()
        _agent(state, "agent_1", MoralType.UNIVERSAL, hp=30)
        _agent(state, "agent_2", MoralType.SELFISH, hp=12)
        _agent(state, "agent_3", MoralType.KIN, hp=4)
        action = self._decide(state, "agent_1")
        assert action.allocation_plan == {"agent_3": 10}

    def test_only_selfish_agents_harm_others(self, scripted_run):
        events = scripted_run.load_events()
        roster = build_roster(events)
        harmful = {
            roster[e.actor_id].moral_type
            for e in events
            if e.kind in ("fight", "rob") and e.actor_id in roster
        }
        assert harmful <= {"selfish"}


# =============================================================================
# Engine
# =============================================================================


class TestEngine:
    """Tests for the step loop, termination, determinism and resume."""

    def test_round_cadence(self):
        phases = round_phases(baseline_config(), 3)
        assert [p.kind for p in phases] == [
            RoundKind.SOCIAL,
            RoundKind.SOCIAL,
            RoundKind.PRODUCTION,
        ]
        assert [p.round_index for p in phases] == [0, 1, 2]

    def test_high_social_cost_cadence(self, tmp_path):
        config = apply_variant(baseline_config(max_time_steps=3), "high_social_cost")
        phases = round_phases(config, 1)
        assert [(p.kind, p.round_index) for p in phases] == [
            (RoundKind.SOCIAL, 0),
            (RoundKind.PRODUCTION, 1),
        ]
        archive = run_simulation(
            config, ScriptedBackend(), RunArchive.create(config, run_dir=tmp_path / "run")
        )
        for event in archive.load_events():
            if event.is_decision:
                expected = RoundKind.SOCIAL if event.round_index == 0 else RoundKind.PRODUCTION
                assert event.round_index in (0, 1)
                assert event.phase == expected.value

    def test_baseline_golden_run(self, tmp_path):
        config = baseline_config()
        assert (config.max_time_steps, config.rng_seed, config.initial_agent_count) == (80, 42, 8)
        first = run_simulation(
            config, ScriptedBackend(), RunArchive.create(config, run_dir=tmp_path / "a")
        )
        assert first.meta["status"] == "completed"
        assert first.meta["termination_reason"] in (MAX_TIME_STEPS, POPULATION_COLLAPSE)
        assert first.load_events()
        final_step = first.meta["final_step"]
        assert first.checkpoint_steps()[-1] == final_step
        assert first.load_checkpoint().step == final_step

        second = run_simulation(
            config, ScriptedBackend(), RunArchive.create(config, run_dir=tmp_path / "b")
        )
        assert first.events_path.read_bytes() == second.events_path.read_bytes()

    def test_termination(self):
        config = baseline_config(max_time_steps=5)
        state = _world(config, step=5)
        _agent(state, "agent_1")
        assert check_termination(state).reason == MAX_TIME_STEPS
        state.step = 4
        assert not check_termination(state).stop
        state.agents["agent_1"].alive = False
        assert check_termination(state).reason == POPULATION_COLLAPSE

    def test_population_collapse(self, tmp_path):
        config = baseline_config(initial_hp=1)
        archive = run_simulation(
            config, ScriptedBackend(), RunArchive.create(config, run_dir=tmp_path / "run")
        )
        assert archive.meta["termination_reason"] == POPULATION_COLLAPSE
        assert archive.meta["final_step"] == 1
        assert archive.meta["status"] == "completed"

    def test_same_seed_same_log(self, tmp_path):
        config = baseline_config(max_time_steps=4)
        first = run_simulation(
            config, ScriptedBackend(), RunArchive.create(config, run_dir=tmp_path / "a")
        )
        second = run_simulation(
            config, ScriptedBackend(), RunArchive.create(config, run_dir=tmp_path / "b")
        )
        assert first.events_path.read_bytes() == second.events_path.read_bytes()

    def test_event_log_is_ordered(self, scripted_run):
        events = scripted_run.load_events()
        assert [e.seq for e in events] == list(range(len(events)))
        assert all(a.step <= b.step for a, b in zip(events, events[1:]))

    def test_actions_respect_round_kind(self, scripted_run):
        for event in scripted_run.load_events():
            if not event.is_decision:
                continue
            if event.phase == RoundKind.SOCIAL.value:
                assert ActionKind(event.kind) in SOCIAL_ACTIONS
            else:
                assert event.phase == RoundKind.PRODUCTION.value
                assert ActionKind(event.kind) in PRODUCTION_ACTIONS
                assert event.round_index == 2

    def test_checkpoint_every_step(self, scripted_run):
        steps = scripted_run.checkpoint_steps()
        assert steps == list(range(0, scripted_run.meta["final_step"] + 1))

    def test_resume_fork_reproduces_log(self, tmp_path):
        config = baseline_config(max_time_steps=6)
        full = run_simulation(
            config, ScriptedBackend(), RunArchive.create(config, run_dir=tmp_path / "full")
        )
        steps = full.checkpoint_steps()
        middle = steps[len(steps) // 2]
        fork = resume_simulation(full.run_dir, ScriptedBackend(), middle, tmp_path / "fork")
        assert fork.events_path.read_bytes() == full.events_path.read_bytes()
        assert fork.meta["resumed_from"]["step"] == middle

    def test_resume_in_place(self, tmp_path):
        config = baseline_config(max_time_steps=5)
        run = run_simulation(
            config, ScriptedBackend(), RunArchive.create(config, run_dir=tmp_path / "run")
        )
        expected = run.events_path.read_bytes()
        resumed = resume_simulation(run.run_dir, ScriptedBackend(), 2)
        assert resumed.events_path.read_bytes() == expected
        assert resumed.meta["status"] == "completed"

    def test_resume_missing_checkpoint(self, scripted_run):
        with pytest.raises(CheckpointError, match="No checkpoint for step 99"):
            resume_simulation(scripted_run.run_dir, ScriptedBackend(), 99, "unused")

    def test_decision_failure_becomes_do_nothing(self, tmp_path):
        config = baseline_config(max_time_steps=2)

        class FlakyBackend:
            kind = "test"

            def __init__(self):
                self.inner = ScriptedBackend()

            def decide(self, bundle):
                if bundle.agent_id == "agent_1":
                    raise DecisionFailure("no answer", agent_id="agent_1")
                return self.inner.decide(bundle)

        archive = run_simulation(
            config, FlakyBackend(), RunArchive.create(config, run_dir=tmp_path / "run")
        )
        mine = [e for e in archive.load_events() if e.actor_id == "agent_1"]
        assert mine
        assert all(e.kind == "do_nothing" for e in mine)
        assert all("decision_failure" in e.parameters for e in mine)
        assert archive.meta["status"] == "completed"
        assert "Decision failure for agent_1" in (archive.run_dir / "errors.log").read_text()


# =============================================================================
# Archive
# =============================================================================


class TestArchive:
    """Tests for run directories."""

    def test_refuses_non_empty_directory(self, tmp_path):
        (tmp_path / "keep.txt").write_text("x")
        with pytest.raises(ArchiveError, match="not empty"):
            RunArchive.create(baseline_config(), run_dir=tmp_path)

    def test_open_requires_meta(self, tmp_path):
        with pytest.raises(ArchiveError, match="not a run directory"):
            RunArchive.open(tmp_path)

    def test_corrupt_event_line(self, tmp_path):
        archive = RunArchive.create(baseline_config(), run_dir=tmp_path / "run")
        archive.events_path.write_text('{"seq": 0}\nnot json\n')
        with pytest.raises(ArchiveError, match="line 1"):
            RunArchive.open(archive.run_dir).load_events()

    def test_meta_records_run(self, scripted_run):
        meta = scripted_run.meta
        assert meta["seed"] == 42
        assert meta["backend"] == "scripted"
        assert meta["config_hash"] == config_hash(scripted_run.config)
        assert (scripted_run.run_dir / "progress.log").exists()

    def test_manifest_reads_meta(self, tmp_path):
        archive = RunArchive.create(
            baseline_config(),
            parent=tmp_path,
            variant="scarce_resource",
            backend="llm",
            config_path="configs/baseline.json",
        )
        manifest = RunArchive.open(archive.run_dir).manifest()
        assert manifest.run_id == archive.run_dir.name
        assert re.fullmatch(r"run_\d{8}-\d{6}_seed42(-\d+)?", manifest.run_id)
        assert (manifest.variant, manifest.backend) == ("scarce_resource", "llm")
        assert manifest.config_path == "configs/baseline.json"
        assert manifest.output_dir == str(archive.run_dir)


# =============================================================================
# Prompts
# =============================================================================

_LIST_MARKER = re.compile(r"(?m)^\s*[\d.]+\s")


def _numbers(text):
    return set(re.findall(r"\d+", _LIST_MARKER.sub("", text)))


class TestPrompts:
    """Tests for prompt rendering."""

    def test_every_rule_number_comes_from_config(self):
        config = baseline_config(
            max_age=23,
            max_hp=47,
            min_hp_repro=13,
            hp_cost_repro=11,
            min_age_repro=5,
            offspring_hp=7,
            collect_cap=4,
            message_max_length=321,
        )
        text = render_system_prompt(PromptAssets.load(), config, MoralType.KIN)
        allowed = {str(v) for v in template_values(config).values()} | {"0"}
        assert _numbers(text) <= allowed
        for expected in ("23", "47", "13", "11", "7", "321"):
            assert expected in _numbers(text)

    def test_moral_prompt_leads(self):
        assets = PromptAssets.load()
        text = render_system_prompt(assets, baseline_config(), MoralType.SELFISH)
        assert text.startswith(assets.moral["selfish"])

    def test_visibility_wording(self):
        assets = PromptAssets.load()
        hidden = render_system_prompt(
            assets, baseline_config(moral_type_visible=False), MoralType.KIN
        )
        assert "cannot see the other agents' moral type" in hidden
        visible = render_system_prompt(assets, baseline_config(), MoralType.KIN)
        assert "can view the other agents' moral type" in visible

    def test_messages_carry_observation(self):
        config = baseline_config()
        bundle = _bundle(config)
        messages = build_messages(PromptAssets.load(), bundle, config)
        assert [m["role"] for m in messages] == ["system", "user"]
        assert json.loads(messages[1]["content"])["agent_id"] == "agent_1"

    def test_reflection_has_no_placeholders(self):
        text = render_reflection(PromptAssets.load(), baseline_config())
        assert "$" not in text


# =============================================================================
# LLM Decision Loop
# =============================================================================


class TestDecisionLoop:
    """Tests for the validate-and-retry loop."""

    def test_retry_count_matches_failures(self):
        config = _no_reflection()
        bundle = _bundle(config)
        client = FakeChatClient(["nope", "{}", "still nope", _valid_text(bundle)])
        exchange = ChatExchange(client.model, 0.0, 1.0)
        response = decide_with_validation(
            client, [{"role": "user", "content": "go"}], bundle, config, exchange=exchange
        )
        assert response.agent_id == "agent_1"
        assert exchange.retry_count == 3
        assert len(client.calls) == 4
        assert [t["layer"] for t in exchange.validation_trace] == ["schema"] * 3

    def test_feedback_is_error_envelope(self):
        config = _no_reflection()
        bundle = _bundle(config)
        document = json.loads(_valid_text(bundle))
        document["action"] = {"kind": "hunt", "target": "prey_1"}
        client = FakeChatClient([json.dumps(document), _valid_text(bundle)])
        decide_with_validation(client, [{"role": "user", "content": "go"}], bundle, config)
        feedback = json.loads(client.calls[1][-1]["content"])
        assert feedback["_error"]["type"] == "invalid_action"
        assert "communicate" in feedback["_error"]["did_you_mean"]

    def test_gives_up_after_max_retries(self):
        config = _no_reflection()
        bundle = _bundle(config)
        client = FakeChatClient(["garbage"] * 20)
        with pytest.raises(DecisionFailure) as exc:
            decide_with_validation(client, [{"role": "user", "content": "go"}], bundle, config)
        assert len(client.calls) == 10
        assert len(exc.value.trace) == 10
        assert exc.value.agent_id == "agent_1"

    def test_reflection_keeps_second_answer(self):
        config = baseline_config()
        bundle = _bundle(config)
        first = _valid_text(bundle)
        revised = json.loads(first)
        revised["thinking"] = "Revised after reflection"
        client = FakeChatClient([first, json.dumps(revised)])
        response = decide_with_validation(
            client, [{"role": "user", "content": "go"}], bundle, config
        )
        assert response.thinking == "Revised after reflection"
        assert len(client.calls) == 2
        reflection = render_reflection(PromptAssets.load(), config)
        assert client.calls[1][-1] == {"role": "user", "content": reflection}

    def test_transport_errors_count(self):
        config = _no_reflection()
        bundle = _bundle(config)
        client = FakeChatClient([TransportError("down", 503), _valid_text(bundle)])
        exchange = ChatExchange(client.model, 0.0, 1.0)
        decide_with_validation(
            client, [{"role": "user", "content": "go"}], bundle, config, exchange=exchange
        )
        assert exchange.retry_count == 1
        assert exchange.validation_trace[0]["layer"] == "transport"


class TestChatEndpoint:
    """Tests against a local HTTP chat-completions endpoint."""

    def test_request_format(self, chat_server):
        chat_server.replies = [(200, "hello", 0.0)]
        client = _server_client(chat_server)
        assert client.chat_completion([{"role": "user", "content": "hi"}]) == "hello"
        request = chat_server.requests[0]
        assert request["model"] == "test-model"
        assert request["messages"] == [{"role": "user", "content": "hi"}]

    def test_server_error(self, chat_server):
        chat_server.replies = [(500, "overloaded", 0.0)]
        with pytest.raises(TransportError) as exc:
            _server_client(chat_server).chat_completion([{"role": "user", "content": "hi"}])
        assert exc.value.status_code == 500

    def test_malformed_body(self, chat_server):
        chat_server.replies = [(400, "bad request", 0.0)]
        with pytest.raises(TransportError, match="HTTP 400"):
            _server_client(chat_server).chat_completion([{"role": "user", "content": "hi"}])

    def test_loop_over_http(self, chat_server):
        config = _no_reflection()
        bundle = _bundle(config)
        chat_server.replies = [
            (200, "not json", 0.0),
            (500, "overloaded", 0.0),
            (200, "{}", 0.0),
            (200, _valid_text(bundle), 0.0),
        ]
        client = _server_client(chat_server)
        exchange = ChatExchange(client.model, client.temperature, client.timeout)
        messages = build_messages(PromptAssets.load(), bundle, config)
        decide_with_validation(client, messages, bundle, config, exchange=exchange)
        assert exchange.retry_count == 3
        assert len(chat_server.requests) == 4
        # system, user, then assistant + feedback for each of the two bad bodies
        assert len(chat_server.requests[-1]["messages"]) == 6

    def test_timeout_counts_as_failure(self, chat_server):
        config = _no_reflection()
        bundle = _bundle(config)
        chat_server.replies = [(200, "late", 1.0), (200, _valid_text(bundle), 0.0)]
        client = _server_client(chat_server, timeout=0.3)
        exchange = ChatExchange(client.model, client.temperature, client.timeout)
        decide_with_validation(
            client, [{"role": "user", "content": "go"}], bundle, config, exchange=exchange
        )
        assert exchange.retry_count == 1
        assert exchange.validation_trace[0]["layer"] == "transport"


class TestTranscripts:
    """Tests for transcript persistence and replay."""

    def test_policy_persists_and_replays(self, tmp_path):
        config = _no_reflection()
        archive = RunArchive.create(config, run_dir=tmp_path / "run")
        bundle = _bundle(config)
        policy = LLMPolicy(FakeChatClient(["junk", _valid_text(bundle)]), config, archive=archive)
        original = policy.decide(bundle)

        records = archive.load_transcript("agent_1")
        assert len(records) == 1
        assert records[0]["outcome"] == "accepted"
        assert records[0]["retry_count"] == 1
        assert records[0]["request"]["model"] == "fake-model"

        replayed = replay_policy(archive, config).decide(bundle)
        assert replayed.action == original.action

    def test_failed_decision_is_persisted(self, tmp_path):
        config = _no_reflection()
        archive = RunArchive.create(config, run_dir=tmp_path / "run")
        policy = LLMPolicy(FakeChatClient([]), config, archive=archive)
        with pytest.raises(DecisionFailure):
            policy.decide(_bundle(config))
        assert archive.load_transcript("agent_1")[0]["outcome"] == "failed"

    def test_replay_exhausted(self):
        with pytest.raises(TransportError, match="exhausted"):
            TranscriptReplayClient([]).chat_completion([])

    def test_transport_failures_replay_in_place(self, tmp_path):
        """A decision lost to transport errors must not consume the next decision's output."""
        config = baseline_config(llm={"reflection_enabled": False, "max_retries": 2})
        archive = RunArchive.create(config, run_dir=tmp_path / "run")
        bundle = _bundle(config)
        client = FakeChatClient(
            [TransportError("timed out"), TransportError("timed out"), _valid_text(bundle)]
        )
        policy = LLMPolicy(client, config, archive=archive)
        with pytest.raises(DecisionFailure):
            policy.decide(bundle)
        original = policy.decide(bundle)

        records = archive.load_transcript("agent_1")
        assert [r["outcome"] for r in records] == ["failed", "accepted"]
        assert records[0]["attempts"] == [{"transport_error": "timed out"}] * 2
        assert records[0]["responses"] == []

        replay = replay_policy(archive, config)
        with pytest.raises(DecisionFailure):
            replay.decide(bundle)
        assert replay.decide(bundle).action == original.action

    def test_replay_raises_recorded_transport_error(self):
        client = TranscriptReplayClient(
            [
                {
                    "request": {"model": "m"},
                    "attempts": [{"transport_error": "HTTP 503"}, {"response": "{}"}],
                }
            ]
        )
        with pytest.raises(TransportError, match="HTTP 503"):
            client.chat_completion([])
        assert client.chat_completion([]) == "{}"

    def test_replay_accepts_records_without_attempts(self):
        client = TranscriptReplayClient([{"request": {"model": "m"}, "responses": ["a", "b"]}])
        assert [client.chat_completion([]), client.chat_completion([])] == ["a", "b"]


# =============================================================================
# Analysis
# =============================================================================


class TestMetrics:
    """Consistency checks of the metrics against a scripted run."""

    def test_population_at_start(self, scripted_run):
        series = compute_population_series(scripted_run)
        assert series.at(0) == {t: 2 for t in TYPE_NAMES}
        assert series.steps[-1] == scripted_run.meta["final_step"]

    def test_population_matches_final_state(self, scripted_run):
        series = compute_population_series(scripted_run)
        checkpoint = scripted_run.load_checkpoint()
        alive = sum(1 for a in checkpoint.agents if a["alive"])
        assert series.totals()[-1] == alive
        assert sum(series.deaths) == sum(1 for a in checkpoint.agents if not a["alive"])

    def test_hp_ledger_matches_final_state(self, scripted_run):
        attribution = compute_hp_attribution(scripted_run)
        for agent in scripted_run.load_checkpoint().agents:
            assert attribution.final_hp(agent["agent_id"]) == agent["hp"]

    def test_hp_ledger_reconciles_every_step(self, scripted_run):
        events = scripted_run.load_events()
        steps = scripted_run.checkpoint_steps()
        assert steps
        for step in steps:
            ledger: dict = {}
            for event in events:
                if event.step > step:
                    break
                for entity, delta in event.hp_deltas.items():
                    ledger[entity] = ledger.get(entity, 0) + delta
            for agent in scripted_run.load_checkpoint(step).agents:
                assert ledger.get(agent["agent_id"], 0) == agent["hp"], (step, agent["agent_id"])

    def test_allocate_and_rob_conserve_hp(self, scripted_run):
        for event in scripted_run.load_events():
            if event.nullified or not event.success:
                continue
            params = event.parameters
            if event.kind == ActionKind.ALLOCATE.value:
                received = params["received"]
                assert event.hp_deltas[event.actor_id] == -params["total"]
                assert sum(received.values()) <= params["total"]
                for target, gained in received.items():
                    assert event.hp_deltas.get(target, 0) == gained
            elif event.kind == ActionKind.ROB.value:
                target = event.targets[0]
                assert event.hp_deltas[target] == -params["taken"]
                actor_delta = event.hp_deltas.get(event.actor_id, 0)
                assert actor_delta == params["gained"] - params["cost"]
                assert params["gained"] <= params["taken"]

    def test_lifespans(self, scripted_run):
        lifespans = compute_lifespans(scripted_run)
        roster = build_roster(scripted_run.load_events())
        assert len(lifespans.records) == len(roster)
        censored = [r for r in lifespans.records if r.censored]
        assert len(censored) == sum(1 for r in roster.values() if r.alive_at_end)
        assert all(r.lifespan >= 0 for r in lifespans.records)

    def test_mortality_counts_deaths(self, scripted_run):
        mortality = compute_mortality(scripted_run)
        deaths = sum(sum(per.values()) for per in mortality.by_cause.values())
        assert deaths == compute_lifespans(scripted_run).deaths()

    def test_action_distribution(self, scripted_run):
        events = scripted_run.load_events()
        actions = compute_action_distributions(events)
        counted = [e for e in events if e.is_decision and not e.nullified]
        assert actions.total_initiated() == len(counted)
        assert actions.initiated["selfish"]["allocate"] == 0
        assert actions.initiated["universal"]["fight"] == 0
        assert actions.initiated["universal"]["rob"] == 0
        assert sum(actions.proportions().values()) == pytest.approx(1.0)

    def test_hunt_traces(self, scripted_run):
        for trace in compute_hunt_traces(scripted_run).traces:
            assert trace.total_damage == trace.max_hp
            assert trace.killer in trace.damage

    def test_networks(self, scripted_run):
        events = scripted_run.load_events()
        lineage, communication = build_networks(events)
        assert lineage.is_forest()
        roster = build_roster(events)
        assert sorted(lineage.roots()) == sorted(a for a, r in roster.items() if r.founder)
        delivered = sum(
            len(e.parameters["deliveries"])
            for e in events
            if e.kind == "communicate" and not e.nullified
        )
        assert sum(communication.weights.values()) == delivered

    def test_table_round_trip(self, scripted_run):
        series = compute_population_series(scripted_run)
        assert PopulationSeries.from_table(series.to_table()) == series


class TestQueryTools:
    """Tests for the per-question query helpers."""

    def test_agent_profile(self, scripted_run):
        profile = get_agent_profile(scripted_run, "agent_1")
        assert profile["founder"] is True
        assert profile["moral_type"] == "universal"
        assert profile["lifespan"]["birth_step"] == 0

    def test_unknown_agent(self, scripted_run):
        with pytest.raises(ValueError, match="No agent named"):
            get_agent_profile(scripted_run, "agent_999")

    def test_population_data(self, scripted_run):
        data = get_population_data(scripted_run, 0)
        assert data["total"] == 8
        with pytest.raises(ValueError, match="outside"):
            get_population_data(scripted_run, 10_000)

    def test_global_observations(self, scripted_run):
        data = get_global_observations(scripted_run, 1, 2)
        assert data["first_step"] == 1
        assert sum(data["decisions"].values()) > 0
        with pytest.raises(ValueError):
            get_global_observations(scripted_run, 3, 1)

    def test_collaboration_trace(self, scripted_run):
        trace = get_collaboration_trace(scripted_run, "prey_1")
        assert trace["prey_id"] == "prey_1"
        assert trace["spawn_step"] == 0
        with pytest.raises(ValueError, match="No prey named"):
            get_collaboration_trace(scripted_run, "prey_999")


class TestJudge:
    """Tests for moral-type judging."""

    def test_oracle_gives_identity(self, scripted_run):
        roster = build_roster(scripted_run.load_events())
        matrix = judge_moral_types(scripted_run, OracleJudge(roster), trials=2, max_workers=2)
        np.testing.assert_allclose(matrix.as_array(), np.eye(4))
        assert matrix.accuracy() == pytest.approx(1.0)
        assert matrix.excluded == {}

    def test_failed_agent_is_excluded(self, scripted_run):
        roster = build_roster(scripted_run.load_events())
        matrix = judge_moral_types(scripted_run, OracleJudge(roster, fail_for={"agent_1"}))
        assert "agent_1" in matrix.excluded
        universal = sum(1 for r in roster.values() if r.moral_type == "universal")
        assert matrix.agents["universal"] == universal - 1

    def test_digest_hides_moral_type(self, scripted_run):
        events = scripted_run.load_events()
        digest = behavior_digest(events, "agent_1")
        assert digest.startswith("Action record of agent_1")
        assert '"moral_type"' not in digest

    def test_digest_budget_drops_oldest(self, scripted_run):
        events = scripted_run.load_events()
        full = behavior_digest(events, "agent_1").splitlines()[1:]
        small = behavior_digest(events, "agent_1", budget_bytes=600).splitlines()[1:]
        assert len(small) < len(full)
        assert small == full[len(full) - len(small) :]

    def test_parse_judgement(self):
        probs = parse_judgement(
            '{"universal": 0.5, "reciprocal": 0.2, "kin": 0.2, "selfish": 0.08}'
        )
        assert sum(probs.values()) == pytest.approx(1.0)
        with pytest.raises(ResponseFormatError, match="sum"):
            parse_judgement('{"universal": 0.5, "reciprocal": 0, "kin": 0, "selfish": 0}')
        with pytest.raises(ResponseFormatError, match="selfish"):
            parse_judgement('{"universal": 1.0, "reciprocal": 0, "kin": 0}')

    @given(st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4))
    def test_parse_any_distribution(self, weights):
        total = sum(weights)
        text = json.dumps({t: w / total for t, w in zip(TYPE_NAMES, weights)})
        assert sum(parse_judgement(text).values()) == pytest.approx(1.0)

    def test_llm_judge_retries(self, tmp_path):
        archive = RunArchive.create(baseline_config(), run_dir=tmp_path / "run")
        answer = '{"universal": 0.7, "reciprocal": 0.1, "kin": 0.1, "selfish": 0.1}'
        client = FakeChatClient(["no idea", answer])
        judge = LLMJudge(client, archive=archive)
        assert judge.judge("agent_3", "Action record")["universal"] == pytest.approx(0.7)
        record = archive.load_transcript("judge_agent_3")[0]
        assert record["retry_count"] == 1

    def test_llm_judge_gives_up(self):
        judge = LLMJudge(FakeChatClient(["no"] * 5), max_retries=2)
        with pytest.raises(ResponseFormatError, match="after 2 attempts"):
            judge.judge("agent_3", "Action record")


class TestReport:
    """Tests for the report bundle."""

    def test_bundle_layout(self, scripted_run, tmp_path):
        roster = build_roster(scripted_run.load_events())
        bundle = emit_report(scripted_run, tmp_path / "report", judge_backend=OracleJudge(roster))
        assert bundle.main_report.exists()
        assert set(bundle.metric_files) >= {
            "population_series",
            "lifespans",
            "action_distribution",
            "hp_attribution",
            "mortality",
            "hunt_traces",
            "lineage_graph",
            "communication_graph",
            "soft_confusion",
        }
        founders = [a for a, r in roster.items() if r.founder]
        written = {p.stem for p in bundle.agent_files}
        assert set(founders) <= written
        text = bundle.main_report.read_text()
        for heading in ("## Summary", "## Population", "## Social dynamics", "## Key metrics"):
            assert heading in text

    def test_bundle_is_reproducible(self, scripted_run, tmp_path):
        first = emit_report(scripted_run, tmp_path / "a")
        second = emit_report(scripted_run, tmp_path / "b")
        for name, path in first.metric_files.items():
            assert path.read_bytes() == second.metric_files[name].read_bytes()
        assert first.main_report.read_bytes() == second.main_report.read_bytes()

    def test_metric_table_loads(self, scripted_run, tmp_path):
        bundle = emit_report(scripted_run, tmp_path / "report")
        table = load_metric_table(bundle.metric_files["population_series"])
        assert PopulationSeries.from_table(table) == compute_population_series(scripted_run)


# =============================================================================
# Mini-games
# =============================================================================


class TestScenarios:
    """Tests for scenario documents."""

    @pytest.mark.parametrize("name", ["invitation", "hp_sharing", "allocation_target"])
    def test_shipped_scenarios_load(self, name):
        spec = load_scenario_file(ROOT / "scenarios" / f"{name}.json")
        assert spec.game == name

    def test_invalid_json(self):
        with pytest.raises(ScenarioError, match="not valid JSON"):
            load_scenario("{")

    def test_asymmetric_family(self):
        document = {
            "name": "broken",
            "game": "custom",
            "decider": "agent_1",
            "roster": [
                {"agent_id": "agent_1", "moral_type": "kin"},
                {"agent_id": "agent_2", "moral_type": "kin", "parent_id": "agent_1"},
            ],
        }
        with pytest.raises(ScenarioError, match="children"):
            load_scenario(json.dumps(document))

    def test_overrides_reach_config(self):
        spec = ScenarioSpec(
            name="x", game="invitation", seed=5, config_overrides={"max_hp": 60}
        )
        config = spec.config()
        assert config.max_hp == 60
        assert config.rng_seed == 5


class TestMiniGames:
    """Tests for the mini-game harness with the scripted policies."""

    def test_invitation_shape(self):
        result = run_invitation_game(ScriptedBackend(), trials=2, max_workers=4)
        assert result.matrix().shape == (12, 12)
        assert not result.failures()

    def test_universal_invites_everyone(self):
        result = run_invitation_game(ScriptedBackend(), trials=2)
        for row in result.rows:
            if row.startswith("universal/"):
                assert all(result.cell(row, c)["value"] == 2 for c in result.columns)

    def test_selfish_invites_the_strong(self):
        result = run_invitation_game(ScriptedBackend(), trials=1)
        assert result.cell("selfish/strong", "universal/weak")["value"] == 0
        assert result.cell("selfish/weak", "kin/strong")["value"] == 1

    def test_invitation_is_reproducible(self):
        first = run_invitation_game(ScriptedBackend(), trials=1)
        second = run_invitation_game(ScriptedBackend(), trials=1)
        assert first.to_table().to_dict() == second.to_table().to_dict()

    def test_hp_sharing(self):
        spec = ScenarioSpec(name="hp", game="hp_sharing", trials=2)
        results = run_hp_sharing_game(ScriptedBackend(), hp_grid=([10, 40], [1, 15]), spec=spec)
        by_name = {r.name: r for r in results}
        assert len(results) == 8
        assert set(by_name) >= {"hp_selfish_young", "hp_universal_elderly"}
        for stage in ("young", "elderly"):
            assert np.all(by_name[f"hp_selfish_{stage}"].matrix() == 0)
        universal = by_name["hp_universal_young"]
        assert universal.matrix().shape == (2, 2)
        assert universal.cell("40", "1")["value"] == 10
        assert universal.cell("40", "15")["value"] == 5
        assert universal.cell("10", "1")["value"] == 0

    def test_hp_grid_bounds(self):
        with pytest.raises(ScenarioError, match="outside"):
            run_hp_sharing_game(ScriptedBackend(), hp_grid=([0], [5]))

    def test_allocation_kin_axis(self):
        result = run_allocation_target_game(ScriptedBackend(), "kin_vs_nonkin")
        assert result.columns == ["kin", "non_kin"]
        assert result.cell("kin", "kin")["value"] == 10
        assert result.cell("kin", "non_kin")["value"] == 0
        assert result.cell("selfish", "kin")["value"] == 0
        assert result.cell("universal", "non_kin")["value"] == 10

    def test_allocation_type_axis(self):
        result = run_allocation_target_game(ScriptedBackend(), "target_moral_type")
        assert result.columns == TYPE_NAMES
        assert all(result.cell("universal", c)["value"] == 10 for c in TYPE_NAMES)
        # no interaction history, so reciprocal agents have nobody to repay
        assert all(result.cell("reciprocal", c)["value"] == 0 for c in TYPE_NAMES)

    def test_failed_trials_are_recorded(self):
        class BrokenBackend:
            kind = "test"

            def decide(self, bundle):
                raise DecisionFailure("offline", agent_id=bundle.agent_id)

        spec = ScenarioSpec(
            name="solo",
            game="custom",
            trials=3,
            decider="agent_1",
            roster=[{"agent_id": "agent_1", "moral_type": "kin"}],
        )
        result = run_custom_game(BrokenBackend(), spec)
        assert len(result.failures()) == 3
        cell = result.cell("decider", "agent_1")
        assert cell["failed"] == 3
        assert cell["value"] == 0.0


# =============================================================================
# Command Line
# =============================================================================


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(config_to_dict(baseline_config(max_time_steps=3))))
    return path


def _exit_code(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


class TestCLI:
    """Tests for the moral-sim command and its exit codes."""

    def test_run_then_analyze(self, small_config_file, tmp_path, capsys):
        run_dir = tmp_path / "run"
        code = _exit_code(
            ["run", "--config", str(small_config_file), "--seed", "3", "--out-dir", str(run_dir)]
        )
        assert code == 0
        assert RunArchive.open(run_dir).meta["seed"] == 3
        assert "Run complete" in capsys.readouterr().out

        assert _exit_code(["analyze", "--run-dir", str(run_dir)]) == 0
        assert (run_dir / "report" / "main_report.md").exists()

    def test_run_json_output(self, small_config_file, tmp_path, capsys):
        run_dir = tmp_path / "run"
        code = _exit_code(
            ["--json", "run", "--config", str(small_config_file), "--out-dir", str(run_dir)]
        )
        assert code == 0
        data = json.loads(capsys.readouterr().out)
        assert data["status"] == "completed"
        assert "_hint" in data

    def test_collapse_warning(self, tmp_path, capsys):
        path = tmp_path / "doomed.json"
        path.write_text(json.dumps(config_to_dict(baseline_config(initial_hp=1))))
        argv = ["run", "--config", str(path), "--out-dir", str(tmp_path / "run")]
        assert _exit_code(argv) == 0
        out = capsys.readouterr().out
        assert "Run complete" in out
        assert "No agent survived past step 1" in out

    def test_missing_config(self, tmp_path):
        assert _exit_code(["run", "--config", str(tmp_path / "nope.json")]) == 2

    def test_unknown_variant(self, small_config_file, tmp_path):
        argv = ["run", "--config", str(small_config_file), "--variant", "famine"]
        assert _exit_code(argv + ["--out-dir", str(tmp_path / "run")]) == 2

    def test_llm_without_key(self, small_config_file, tmp_path, monkeypatch):
        monkeypatch.delenv("MORALSIM_API_KEY", raising=False)
        monkeypatch.delenv("OPENAI_API_KEY", raising=False)
        run_dir = tmp_path / "run"
        argv = ["run", "--config", str(small_config_file), "--backend", "llm"]
        assert _exit_code(argv + ["--out-dir", str(run_dir)]) == 2
        assert not run_dir.exists()

    def test_replay_without_source(self, small_config_file, tmp_path):
        argv = ["run", "--config", str(small_config_file), "--backend", "replay"]
        assert _exit_code(argv + ["--out-dir", str(tmp_path / "run")]) == 2

    def test_runtime_failure(self, small_config_file, tmp_path):
        with patch("moral_sim.engine.run_simulation", side_effect=RuntimeError("boom")):
            argv = ["run", "--config", str(small_config_file), "--out-dir", str(tmp_path / "run")]
            assert _exit_code(argv) == 1

    def test_resume(self, small_config_file, tmp_path):
        run_dir = tmp_path / "run"
        _exit_code(["run", "--config", str(small_config_file), "--out-dir", str(run_dir)])
        fork = tmp_path / "fork"
        argv = ["resume", "--run-dir", str(run_dir), "--checkpoint-step", "1"]
        assert _exit_code(argv + ["--out-dir", str(fork)]) == 0
        assert (fork / "events.jsonl").read_bytes() == (run_dir / "events.jsonl").read_bytes()
        missing = ["resume", "--run-dir", str(run_dir), "--checkpoint-step", "99"]
        assert _exit_code(missing) == 2

    def test_analyze_not_a_run(self, tmp_path):
        assert _exit_code(["analyze", "--run-dir", str(tmp_path)]) == 2

    def test_analyze_unwritable_report_dir(self, small_config_file, tmp_path, capsys):
        run_dir = tmp_path / "run"
        _exit_code(["run", "--config", str(small_config_file), "--out-dir", str(run_dir)])
        blocker = tmp_path / "report"
        blocker.write_text("not a directory")
        capsys.readouterr()
        argv = ["--json", "analyze", "--run-dir", str(run_dir), "--out-dir", str(blocker)]
        assert _exit_code(argv) == 2
        assert json.loads(capsys.readouterr().out)["_error"]["type"] == "archive_error"

    def test_run_into_a_file(self, small_config_file, tmp_path, capsys):
        blocker = tmp_path / "run"
        blocker.write_text("not a directory")
        argv = ["run", "--config", str(small_config_file), "--out-dir", str(blocker)]
        assert _exit_code(argv) == 2
        assert "Cannot create run directory" in capsys.readouterr().err

    def test_minigame_unwritable_out_dir(self, tmp_path):
        blocker = tmp_path / "tables"
        blocker.write_text("not a directory")
        scenario = ROOT / "scenarios" / "invitation.json"
        argv = ["minigame", "--scenario", str(scenario), "--trials", "1"]
        assert _exit_code(argv + ["--out-dir", str(blocker)]) == 2

    def test_analyze_agent(self, small_config_file, tmp_path, capsys):
        run_dir = tmp_path / "run"
        _exit_code(["run", "--config", str(small_config_file), "--out-dir", str(run_dir)])
        capsys.readouterr()
        assert _exit_code(["analyze", "--run-dir", str(run_dir), "--agent", "agent_2"]) == 0
        assert json.loads(capsys.readouterr().out)["agent_id"] == "agent_2"
        assert _exit_code(["analyze", "--run-dir", str(run_dir), "--agent", "agent_99"]) == 2

    def test_minigame(self, tmp_path):
        out = tmp_path / "tables"
        scenario = ROOT / "scenarios" / "invitation.json"
        argv = ["minigame", "--scenario", str(scenario), "--trials", "1", "--out-dir", str(out)]
        assert _exit_code(argv) == 0
        table = load_metric_table(out / "invitation.json")
        assert len(table.meta["rows"]) == 12

    def test_bad_scenario(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"name": "x", "game": "tag"}')
        assert _exit_code(["minigame", "--scenario", str(path)]) == 2

    def test_schema(self, capsys):
        assert _exit_code(["schema"]) == 0
        schema = json.loads(capsys.readouterr().out)
        assert "long_term_memory" in schema["properties"]


# =============================================================================
# Response Helpers
# =============================================================================


class TestResponses:
    """Tests for the JSON envelopes."""

    def test_response_hint(self):
        data = json.loads(make_response({"a": np.int64(3)}, "look here"))
        assert data == {"a": 3, "_hint": "look here"}

    def test_compact_error(self):
        data = json.loads(make_error("t", "m", "s", did_you_mean=["x"], compact=True))
        assert data == {"_error": {"type": "t", "message": "m"}}


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
