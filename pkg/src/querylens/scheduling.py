"""Training-data machinery: task-balanced upsampling, mini-batch scheduling,
and the reference cross-entropy loss arithmetic.

Manifests are data written to files, not live training loops; gradient
updates happen elsewhere. Everything here is pure and seeded, so identical
inputs produce byte-identical manifests.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .exceptions import DatasetFormatError

HOMOGENEOUS = "homogeneous"
HETEROGENEOUS = "heterogeneous"


@dataclass(frozen=True)
class SftExample:
    """One prompt/target pair, optionally with per-target-token log-probs."""

    prompt: str
    target: str
    token_logprobs: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.target:
            raise ValueError("target must be non-empty")
        if self.token_logprobs is not None:
            object.__setattr__(self, "token_logprobs", tuple(self.token_logprobs))


@dataclass(frozen=True)
class TaskDataset:
    task_id: str
    examples: tuple[SftExample, ...]

    def __post_init__(self):
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        object.__setattr__(self, "examples", tuple(self.examples))
        if not self.examples:
            raise ValueError(f"task {self.task_id!r} has no examples")


@dataclass(frozen=True)
class BatchManifest:
    """Batch assignments as (task_id, example index) pairs.

    In heterogeneous mode only the final batch may be short; in homogeneous
    mode each task's final batch may be short, since batches never mix tasks.
    """

    mode: str
    batch_size: int
    seed: int
    batches: tuple[tuple[tuple[str, int], ...], ...]

    def __post_init__(self):
        if self.mode not in (HOMOGENEOUS, HETEROGENEOUS):
            raise ValueError(f"mode must be {HOMOGENEOUS} or {HETEROGENEOUS}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        object.__setattr__(
            self, "batches", tuple(tuple(tuple(entry) for entry in b) for b in self.batches)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "mode": self.mode,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "batches": [[[task, idx] for task, idx in batch] for batch in self.batches],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BatchManifest":
        return cls(
            mode=data["mode"],
            batch_size=data["batch_size"],
            seed=data["seed"],
            batches=tuple(
                tuple((task, idx) for task, idx in batch) for batch in data["batches"]
            ),
        )


def upsample(datasets: Sequence[TaskDataset], seed: int) -> list[TaskDataset]:
    """Draw with replacement until every task matches the largest task's count.

    Originals are always retained in place; the padding examples are drawn
    from the same task by the seeded generator. Tasks already at the maximum
    come back unchanged.
    """
    if not datasets:
        raise ValueError("upsample needs at least one dataset")
    target = max(len(d.examples) for d in datasets)
    rng = random.Random(seed)
    out: list[TaskDataset] = []
    for dataset in datasets:
        deficit = target - len(dataset.examples)
        if deficit == 0:
            out.append(dataset)
            continue
        extra = tuple(rng.choice(dataset.examples) for _ in range(deficit))
        out.append(TaskDataset(task_id=dataset.task_id, examples=dataset.examples + extra))
    return out


def schedule(
    datasets: Sequence[TaskDataset],
    mode: str,
    batch_size: int,
    seed: int,
    curriculum: Sequence[str] | None = None,
) -> BatchManifest:
    """Cut the datasets into mini-batches; every example appears exactly once.

    Heterogeneous: one seeded shuffle of the pooled examples, cut into
    consecutive batches. Homogeneous: per-task seeded shuffles cut into
    single-task batches, with the batch slot order itself a seeded shuffle,
    so each task occupies slots in proportion to its batch count. A
    curriculum (explicit task-order list, homogeneous mode only) replaces
    the slot shuffle: all of one task's batches run before the next task's.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if mode not in (HOMOGENEOUS, HETEROGENEOUS):
        raise ValueError(f"mode must be {HOMOGENEOUS} or {HETEROGENEOUS}")
    if curriculum is not None and mode != HOMOGENEOUS:
        raise ValueError("a curriculum applies to homogeneous mode only")
    rng = random.Random(seed)

    if mode == HETEROGENEOUS:
        pool = [(d.task_id, i) for d in datasets for i in range(len(d.examples))]
        rng.shuffle(pool)
        batches = [tuple(pool[i : i + batch_size]) for i in range(0, len(pool), batch_size)]
    else:
        batches = []
        for dataset in datasets:
            indices = list(range(len(dataset.examples)))
            rng.shuffle(indices)
            for i in range(0, len(indices), batch_size):
                batches.append(tuple((dataset.task_id, j) for j in indices[i : i + batch_size]))
        if curriculum is None:
            rng.shuffle(batches)
        else:
            position = {task: i for i, task in enumerate(curriculum)}
            missing = sorted({d.task_id for d in datasets} - set(position))
            if missing:
                raise ValueError(f"curriculum omits tasks {missing}")
            batches.sort(key=lambda batch: position[batch[0][0]])  # stable within task

    return BatchManifest(mode=mode, batch_size=batch_size, seed=seed, batches=tuple(batches))


def validate_manifest(manifest: BatchManifest, datasets: Sequence[TaskDataset]) -> list[str]:
    """Check manifest invariants against its source datasets."""
    problems: list[str] = []
    expected = sorted((d.task_id, i) for d in datasets for i in range(len(d.examples)))
    emitted = sorted(entry for batch in manifest.batches for entry in batch)
    if expected != emitted:
        problems.append("coverage: batches are not a permutation of the examples")
    if manifest.mode == HOMOGENEOUS:
        if any(len({task for task, _ in batch}) != 1 for batch in manifest.batches):
            problems.append("homogeneity: a batch mixes tasks")
        short_by_task: dict[str, int] = {}
        for batch in manifest.batches:
            if len(batch) < manifest.batch_size:
                task = batch[0][0]
                short_by_task[task] = short_by_task.get(task, 0) + 1
        if any(count > 1 for count in short_by_task.values()):
            problems.append("batch-size: a task has more than one short batch")
    else:
        short = [i for i, batch in enumerate(manifest.batches) if len(batch) < manifest.batch_size]
        if short and short != [len(manifest.batches) - 1]:
            problems.append("batch-size: a non-final batch is short")
    return problems


def sft_loss(example: SftExample) -> float:
    """Negative sum of the target-token log-probabilities of one example."""
    if example.token_logprobs is None:
        raise ValueError("example carries no token log-probabilities")
    if any(lp > 0 for lp in example.token_logprobs):
        raise ValueError("log-probabilities must be <= 0")
    return -sum(example.token_logprobs)


def corpus_sft_loss(examples: Iterable[SftExample]) -> float:
    """Total loss over a corpus: the sum of per-example losses."""
    return sum(sft_loss(e) for e in examples)


def load_task_datasets(path: str | Path) -> list[TaskDataset]:
    """Read line-delimited task records, grouping by task_id in file order.

    Each line is a JSON object with task_id, prompt, and target fields, plus
    an optional token_logprobs list.
    """
    grouped: dict[str, list[SftExample]] = {}
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                logprobs = record.get("token_logprobs")
                example = SftExample(
                    prompt=record["prompt"],
                    target=record["target"],
                    token_logprobs=tuple(logprobs) if logprobs is not None else None,
                )
                task_id = record["task_id"]
                if not isinstance(task_id, str) or not task_id:
                    raise ValueError("task_id must be a non-empty string")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(line_number, str(exc)) from exc
            grouped.setdefault(task_id, []).append(example)
    return [TaskDataset(task_id=task, examples=tuple(examples)) for task, examples in grouped.items()]
