import json

import numpy as np
import pytest

from mdtsim.domain import (
    AuditLog,
    ConsensusMatrix,
    FixedClock,
    Opinion,
    PatientCase,
    default_treatments,
    empty_chain,
    flatten_state,
    opinion_violations,
    state_layout,
    validate_case,
)
from mdtsim.errors import ShapeMismatch
from mdtsim.sim import generate_case

from conftest import toy_case


def _matrix(entries, round_index=1, w=0.5):
    entries = np.asarray(entries, dtype=float)
    return ConsensusMatrix(entries=entries, round=round_index, kendall_w=w,
                           per_agent_confidence=np.full(entries.shape[0], 0.8))


def test_default_treatments_catalog():
    opts = default_treatments()
    assert [t.index for t in opts] == list(range(7))
    assert len({t.name for t in opts}) == 7
    for t in opts:
        assert 0.0 <= t.efficacy <= 1.0
        assert 0.0 <= t.toxicity <= 1.0
        assert -1.0 <= t.qol_impact <= 1.0
        assert t.cost > 0


def test_treatment_bounds_checked():
    t = default_treatments()[0]
    t.toxicity = 1.2
    with pytest.raises(ValueError):
        t.check()


class TestValidateCase:
    def test_valid_case_returned_unchanged(self):
        case = generate_case(1, difficulty=0.0)
        assert validate_case(case, 247) is case

    def test_dimension_mismatch(self):
        case = generate_case(1)
        short = PatientCase(id="x", features=case.features[:246],
                            feature_blocks=case.feature_blocks)
        codes = [v.code for v in validate_case(short, 247)]
        assert "DimensionMismatch" in codes

    def test_out_of_range_names_index(self):
        feats = np.full(28, 0.5)
        feats[13] = 1.5
        result = validate_case(toy_case(feats), 28)
        bad = [v for v in result if v.code == "OutOfRange"]
        assert bad and bad[0].index == 13

    def test_nan_rejected(self):
        feats = np.full(28, 0.5)
        feats[3] = np.nan
        codes = [v.code for v in validate_case(toy_case(feats), 28)]
        assert "OutOfRange" in codes

    def test_block_overlap(self):
        case = toy_case(np.full(28, 0.5))
        case.feature_blocks = {"a": (0, 20), "b": (10, 28)}
        codes = [v.code for v in validate_case(case, 28)]
        assert "BlockOverlap" in codes

    def test_block_gap(self):
        case = toy_case(np.full(28, 0.5))
        case.feature_blocks = {"a": (0, 10), "b": (12, 28)}
        codes = [v.code for v in validate_case(case, 28)]
        assert "BlockGap" in codes

    def test_randomized_accept_iff_invariants_hold(self):
        # validate_case must accept exactly the honestly-generated cases
        # and reject every single-field corruption of them.
        rng = np.random.default_rng(7)
        for trial in range(60):
            case = generate_case(int(rng.integers(1 << 30)))
            assert validate_case(case, 247) is case
            corrupt = PatientCase(
                id=case.id,
                features=case.features.copy(),
                feature_blocks=dict(case.feature_blocks),
            )
            kind = trial % 3
            feats = corrupt.features.copy()
            if kind == 0:
                feats[int(rng.integers(247))] = 1.0 + float(rng.uniform(0.01, 5))
                corrupt.features = feats
            elif kind == 1:
                corrupt.features = feats[:-1]
            else:
                corrupt.feature_blocks["vitals"] = (10, 48)
            assert validate_case(corrupt, 247) is not corrupt


class TestFlattenState:
    def test_default_dimensions(self):
        case = generate_case(3)
        m = _matrix(np.zeros((7, 7)))
        vec = flatten_state(case, m, 1, np.full(7, 0.8), 0.3)
        assert vec.shape == (247 + 49 + 1 + 7 + 1,)
        assert len(vec) == 305

    def test_all_zero_inputs(self):
        case = toy_case(np.zeros(28))
        m = _matrix(np.zeros((2, 3)), w=0.0)
        m = ConsensusMatrix(entries=np.zeros((2, 3)), round=0, kendall_w=0.0,
                            per_agent_confidence=np.zeros(2))
        vec = flatten_state(case, m, 0, np.zeros(2), 0.0)
        assert np.all(vec == 0.0)

    def test_toy_layout_arithmetic(self):
        case = PatientCase(id="t", features=np.full(4, 0.5),
                           feature_blocks={"a": (0, 4)})
        m = _matrix(np.ones((2, 3)))
        vec = flatten_state(case, m, 2, np.array([0.5, 0.6]), 0.4)
        assert len(vec) == 4 + 6 + 1 + 2 + 1 == 14

    def test_confidence_length_checked(self):
        case = generate_case(3)
        m = _matrix(np.zeros((7, 7)))
        with pytest.raises(ShapeMismatch):
            flatten_state(case, m, 1, np.full(6, 0.8), 0.3)

    def test_injective_on_components(self):
        case = generate_case(5)
        entries = np.random.default_rng(0).uniform(size=(7, 7))
        conf = np.full(7, 0.8)
        m = _matrix(entries)
        base = flatten_state(case, m, 1, conf, 0.3)
        layout = state_layout(247, 7, 7)

        bumped = flatten_state(case, _matrix(entries + 0.0), 2, conf, 0.3)
        assert (base != bumped)[layout["round"]].any()

        conf2 = conf.copy()
        conf2[3] += 0.05
        with_conf = flatten_state(case, m, 1, conf2, 0.3)
        diff = np.flatnonzero(base != with_conf)
        assert list(diff) == [layout["confidences"].start + 3]

        entries2 = entries.copy()
        entries2[2, 4] += 0.1
        with_entry = flatten_state(case, _matrix(entries2), 1, conf, 0.3)
        diff = np.flatnonzero(base != with_entry)
        assert list(diff) == [layout["matrix"].start + 2 * 7 + 4]

        with_w = flatten_state(case, m, 1, conf, 0.31)
        assert np.flatnonzero(base != with_w)[0] == layout["w"].start


class TestOpinionInvariants:
    def _op(self, **kw):
        fields = dict(
            agent_id="nurse",
            raw_preferences=np.linspace(-1, 1, 7),
            reasoning="short note",
            confidence=0.8,
            concerns=("a", "b"),
            evidence=empty_chain(),
            round=1,
        )
        fields.update(kw)
        return Opinion(**fields)

    def test_valid(self):
        assert opinion_violations(self._op(), 7) == []

    def test_preference_range(self):
        op = self._op(raw_preferences=np.array([0.0] * 6 + [1.7]))
        assert any("[-1,1]" in v for v in opinion_violations(op, 7))

    def test_wrong_length(self):
        op = self._op(raw_preferences=np.zeros(6))
        assert opinion_violations(op, 7)

    def test_confidence_range(self):
        assert opinion_violations(self._op(confidence=1.3), 7)

    def test_duplicate_concerns(self):
        assert opinion_violations(self._op(concerns=("x", "x")), 7)

    def test_reasoning_cap_is_whitespace_tokens(self):
        ok = self._op(reasoning=" ".join(["w"] * 512))
        too_long = self._op(reasoning=" ".join(["w"] * 513))
        assert opinion_violations(ok, 7) == []
        assert opinion_violations(too_long, 7)


class TestAudit:
    def test_timestamps_nondecreasing_and_key_order(self):
        log = AuditLog("case-1", FixedClock(start_ms=1000))
        for r in (1, 1, 2):
            log.emit("opinion", r, "nurse", {"x": 1})
        ts = [rec.ts_ms for rec in log.records]
        assert ts == sorted(ts)
        line = log.records[0].to_json_line()
        keys = list(json.loads(line))
        assert keys == ["ts_ms", "case_id", "round", "agent_id", "event", "payload"]

    def test_unknown_event_rejected(self):
        log = AuditLog("case-1", FixedClock())
        with pytest.raises(ValueError):
            log.emit("telemetry", 1, "x", {})

    def test_jsonl_writes_one_line_per_record(self, tmp_path):
        log = AuditLog("case-1", FixedClock())
        log.emit("opinion", 1, "nurse", {})
        log.emit("termination", 1, "system", {"reason": "threshold"})
        path = tmp_path / "audit.jsonl"
        log.write(str(path))
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert all(json.loads(line) for line in lines)


def test_case_json_round_trip(tmp_path):
    from mdtsim.domain import load_case, save_case

    case = generate_case(99, difficulty=0.25)
    path = tmp_path / "case.json"
    save_case(case, str(path))
    again = load_case(str(path))
    assert again.id == case.id
    assert np.array_equal(again.features, case.features)
    assert again.feature_blocks == case.feature_blocks
    assert again.hidden_label == case.hidden_label


def test_features_are_locked():
    case = generate_case(1)
    with pytest.raises(ValueError):
        case.features[0] = 0.9


def test_block_panel_means_shape_and_range(case):
    panels = case.block_panel_means("labs", 7, 5)
    assert panels.shape == (7, 5)
    assert np.all(panels >= 0) and np.all(panels <= 1)
    assert case.block_panel_means("labs", 7, 5) is panels  # cached
