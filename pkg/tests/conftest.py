import json
import time
from dataclasses import dataclass
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from rnnt_tts.codec import CodecSpec, corpus_generate, load_corpus, make_speakers
from rnnt_tts.model import TransducerTTS
from rnnt_tts.numerics.optim import LrSchedule
from rnnt_tts.runtime import (
    RunConfig,
    TrainConfig,
    ground_truth_features,
    load_examples,
    new_optimizer,
    run_training,
)

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

ACCEPTANCE_LINES: list[str] = []

# toy end-to-end run shared by the acceptance suite and runtime tests
TOY_SEED = 0
TOY_SENTENCES = 50
TOY_HELDOUT = 100  # 50 distinct texts, each read by both speakers
TOY_STEPS = 1000


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@dataclass
class ToyRun:
    root: Path
    config: RunConfig
    model: TransducerTTS
    corpus: object
    train: list
    heldout: list
    train_features: list
    steps: int
    seconds: float
    log: list


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy_corpus")
    spec = CodecSpec()
    corpus_generate(root, TOY_SENTENCES, make_speakers(2, spec.feature_dim, TOY_SEED), spec, TOY_SEED,
                    heldout=TOY_HELDOUT)
    return root


@pytest.fixture(scope="session")
def toy_run(toy_corpus):
    corpus, _ = load_corpus(toy_corpus)
    train = load_examples(toy_corpus / "manifest.jsonl", corpus.vocab)
    heldout = load_examples(toy_corpus / "heldout.jsonl", corpus.vocab)
    cfg = RunConfig(train=TrainConfig(batch_size=8, total_steps=TOY_STEPS, seed=TOY_SEED,
                                      schedule=LrSchedule(warmup_steps=100, max_lr=1e-3, total_steps=TOY_STEPS)))
    model = TransducerTTS(cfg.model)
    opt = new_optimizer(cfg.train)
    log = []
    t0 = time.perf_counter()
    steps = run_training(model, train, cfg.train, opt, 0, TOY_STEPS, lambda s, out: log.append(out.log_record(s)))
    seconds = time.perf_counter() - t0
    feats = [ground_truth_features(toy_corpus / "manifest.jsonl", e.id) for e in train]
    return ToyRun(toy_corpus, cfg, model, corpus, train, heldout, feats, steps, seconds, log)


@pytest.fixture
def tiny_model():
    from rnnt_tts.model import tiny_config
    return TransducerTTS(tiny_config())


def load_json(path):
    return json.loads(Path(path).read_text())
