"""
Diverse Beam Search Tests.

Checks the single-group reduction against a textbook beam search, the
provenance of stored log-probabilities, the Hamming diversity penalty on
hand-built models, and the model contract checks.
"""
import sys
import os
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import math

import numpy as np
import pytest
from pydantic import ValidationError

from brido.contrastive import f_value
from brido.diverse_beam import BeamConfig, diverse_beam_search, diverse_beam_search_groups
from brido.errors import BeamSearchError, ModelContractError
from brido.text_metrics import tokenize
from brido.toy_lm import init_model, sequence_logprob

CONTENT = ["a", "b", "c", "d", "e"]
SOURCE = tokenize("a short source document")


class TableModel:
    """Scripted next-token model: a function of the prefix length only."""

    def __init__(self, vocabulary, rows, eos="</s>"):
        self.target_vocabulary = vocabulary
        self.eos_token = eos
        self._rows = rows

    def next_token_logprobs(self, source, prefix):
        row = self._rows[min(len(prefix), len(self._rows) - 1)]
        return np.array(row, dtype=np.float64)


def _textbook_beam_search(model, source, width, max_length, min_length=1):
    """Plain width-limited beam search; finished hypotheses stay in the beam."""
    vocab = list(model.target_vocabulary)
    eos = vocab.index(model.eos_token)
    beams = [((), (), 0.0, False)]
    for step in range(max_length):
        if all(b[3] for b in beams):
            break
        expanded = []
        for tokens, logprobs, score, finished in beams:
            if finished:
                expanded.append((tokens, logprobs, score, True))
                continue
            row = model.next_token_logprobs(source, tokens)
            for k, token in enumerate(vocab):
                lp = float(row[k])
                if k == eos:
                    if step >= min_length:
                        expanded.append((tokens, logprobs, score + lp, True))
                else:
                    expanded.append((tokens + (token,), logprobs + (lp,), score + lp, False))
        expanded.sort(key=lambda b: -b[2])
        beams = expanded[:width]
    finals = [(sum(b[1]) / len(b[1]), k, b) for k, b in enumerate(beams)]
    finals.sort(key=lambda item: (-item[0], item[1]))
    return [(b[0], b[1]) for _, _, b in finals]


def test_single_group_without_penalty_is_textbook_beam_search():
    cfg = BeamConfig(eta=0.0, num_groups=1, num_candidates=4, max_length=6, beta=1.0)
    for seed in range(50):
        model = init_model(CONTENT, num_buckets=1, seed=seed)
        model = model.with_logits(model.logits * 20.0)
        candidates = diverse_beam_search(model, SOURCE, cfg)
        expected = _textbook_beam_search(model, SOURCE, width=4, max_length=6)
        assert [(c.seq.tokens, c.token_logprobs) for c in candidates] == expected


def test_stored_logprobs_match_rescoring():
    cfg = BeamConfig(eta=0.5, num_groups=2, num_candidates=6, max_length=5)
    for seed in range(10):
        model = init_model(CONTENT, num_buckets=3, seed=seed)
        for c in diverse_beam_search(model, SOURCE, cfg):
            rescored = sequence_logprob(model, SOURCE, c.seq.tokens)
            assert len(rescored) == len(c.token_logprobs)
            assert all(abs(x - y) <= 1e-12 for x, y in zip(rescored, c.token_logprobs))
            assert all(lp <= 0.0 for lp in c.token_logprobs)


def test_search_is_deterministic():
    cfg = BeamConfig(eta=0.3, num_groups=2, num_candidates=4, max_length=5)
    model = init_model(CONTENT, num_buckets=2, seed=5)
    first = diverse_beam_search(model, SOURCE, cfg)
    second = diverse_beam_search(model, SOURCE, cfg)
    assert first == second


def test_output_is_partitioned_into_equal_groups():
    cfg = BeamConfig(eta=0.3, num_groups=4, num_candidates=8, max_length=4)
    model = init_model(CONTENT, num_buckets=1, seed=1)
    groups = diverse_beam_search_groups(model, SOURCE, cfg)
    assert len(groups) == 4
    assert all(len(g) == cfg.group_width == 2 for g in groups)
    candidates = diverse_beam_search(model, SOURCE, cfg)
    assert len(candidates) == 8
    f = [f_value(c, cfg.beta) for c in candidates]
    assert f == sorted(f, reverse=True)


def test_deterministic_model_gives_identical_candidates():
    certain = [-math.inf, 0.0, -math.inf]
    stop = [0.0, -math.inf, -math.inf]
    model = TableModel(["</s>", "a", "b"], [certain, certain, certain, stop])
    for eta in (0.0, 0.5, 10.0):
        cfg = BeamConfig(eta=eta, num_groups=2, num_candidates=4, max_length=8)
        candidates = diverse_beam_search(model, SOURCE, cfg)
        assert len(candidates) == 4
        assert all(c.seq.tokens == ("a", "a", "a") for c in candidates)
        assert all(c.token_logprobs == (0.0, 0.0, 0.0) for c in candidates)


def test_penalty_forces_distinct_first_tokens():
    first = [-math.inf, math.log(0.6), math.log(0.4)]
    stop = [0.0, -math.inf, -math.inf]
    model = TableModel(["</s>", "x", "y"], [first, stop])

    diverse = diverse_beam_search(model, SOURCE, BeamConfig(eta=5.0, num_groups=2, num_candidates=2, max_length=3))
    assert [c.seq.tokens for c in diverse] == [("x",), ("y",)]
    assert diverse[1].token_logprobs == (math.log(0.4),)

    plain = diverse_beam_search(model, SOURCE, BeamConfig(eta=0.0, num_groups=2, num_candidates=2, max_length=3))
    assert [c.seq.tokens for c in plain] == [("x",), ("x",)]


def test_min_length_forbids_immediate_stop():
    eager = [math.log(0.9), math.log(0.05), math.log(0.05)]
    model = TableModel(["</s>", "x", "y"], [eager])
    candidates = diverse_beam_search(model, SOURCE, BeamConfig(eta=0.0, num_groups=1, num_candidates=2, max_length=4))
    assert all(len(c.seq.tokens) >= 1 for c in candidates)
    longer = diverse_beam_search(
        model, SOURCE, BeamConfig(eta=0.0, num_groups=1, num_candidates=2, max_length=4, min_length=2)
    )
    assert all(len(c.seq.tokens) >= 2 for c in longer)


def test_max_length_caps_sequences():
    never_stop = [-math.inf, math.log(0.5), math.log(0.5)]
    model = TableModel(["</s>", "x", "y"], [never_stop])
    candidates = diverse_beam_search(model, SOURCE, BeamConfig(eta=0.0, num_groups=1, num_candidates=2, max_length=3))
    assert all(len(c.seq.tokens) == 3 for c in candidates)


def test_model_contract_violations():
    cfg = BeamConfig(eta=0.0, num_groups=1, num_candidates=2, max_length=3)
    unnormalised = TableModel(["</s>", "x", "y"], [[-1.0, -1.0, -1.0]])
    with pytest.raises(ModelContractError):
        diverse_beam_search(unnormalised, SOURCE, cfg)
    wrong_shape = TableModel(["</s>", "x", "y"], [[0.0, -math.inf]])
    with pytest.raises(ModelContractError):
        diverse_beam_search(wrong_shape, SOURCE, cfg)
    dead = TableModel(["</s>", "x", "y"], [[-math.inf, -math.inf, -math.inf]])
    with pytest.raises(BeamSearchError):
        diverse_beam_search(dead, SOURCE, cfg)


def test_config_requires_divisible_groups():
    with pytest.raises(ValidationError):
        BeamConfig(num_candidates=6, num_groups=4)
    assert BeamConfig(num_candidates=32, num_groups=32).group_width == 1
    assert BeamConfig(num_candidates=32, num_groups=4).group_width == 8
