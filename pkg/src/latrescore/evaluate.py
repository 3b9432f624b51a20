"""WER scoring, alignments, and rescoring parameter sweeps.

Corpus WER pools error and reference-word counts over utterances (it is
not a mean of per-utterance rates). Relative WER change is reported in two
conventions side by side:

    paper:    100 * (post - pre) / post
    standard: 100 * (post - pre) / pre

so a reader can tell which one a number came from.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import MissingReference, NonPositiveWer
from .lattice import Lattice, RescoreConfig, best_path
from .lm import LmScorer
from .rescore import rescore_lattice, rescore_nbest

__all__ = [
    "EditOp",
    "AlignStep",
    "WerBreakdown",
    "RelativeChange",
    "align",
    "wer_counts",
    "corpus_wer",
    "relative_change",
    "SweepCell",
    "SweepReport",
    "sweep",
    "merge_reports",
]


class EditOp(str, Enum):
    MATCH = "match"
    SUB = "sub"
    INS = "ins"
    DEL = "del"


@dataclass(frozen=True)
class AlignStep:
    """One alignment step; ref_word/hyp_word are None where nothing aligns."""

    op: EditOp
    ref_word: str | None
    hyp_word: str | None


# Backtrace codes, in tie-break preference order: match > sub > del > ins.
_MATCH, _SUB, _DEL, _INS = 0, 1, 2, 3


def align(ref: Sequence[str], hyp: Sequence[str]) -> list[AlignStep]:
    """Minimum-edit alignment with unit costs.

    At equal cost the op preference is match > sub > del > ins, which makes
    the alignment deterministic.
    """
    n, m = len(ref), len(hyp)
    width = m + 1
    cost = [0] * ((n + 1) * width)
    op = [0] * ((n + 1) * width)
    for j in range(1, width):
        cost[j] = j
        op[j] = _INS
    for i in range(1, n + 1):
        cost[i * width] = i
        op[i * width] = _DEL
    for i in range(1, n + 1):
        row = i * width
        prev = row - width
        ref_word = ref[i - 1]
        for j in range(1, width):
            if ref_word == hyp[j - 1]:
                best_cost = cost[prev + j - 1]
                best_op = _MATCH
            else:
                best_cost = cost[prev + j - 1] + 1
                best_op = _SUB
            del_cost = cost[prev + j] + 1
            if del_cost < best_cost:
                best_cost = del_cost
                best_op = _DEL
            ins_cost = cost[row + j - 1] + 1
            if ins_cost < best_cost:
                best_cost = ins_cost
                best_op = _INS
            cost[row + j] = best_cost
            op[row + j] = best_op

    steps: list[AlignStep] = []
    i, j = n, m
    while i > 0 or j > 0:
        code = op[i * width + j]
        if code == _MATCH:
            i -= 1
            j -= 1
            steps.append(AlignStep(EditOp.MATCH, ref[i], hyp[j]))
        elif code == _SUB:
            i -= 1
            j -= 1
            steps.append(AlignStep(EditOp.SUB, ref[i], hyp[j]))
        elif code == _DEL:
            i -= 1
            steps.append(AlignStep(EditOp.DEL, ref[i], None))
        else:
            j -= 1
            steps.append(AlignStep(EditOp.INS, None, hyp[j]))
    steps.reverse()
    return steps


@dataclass(frozen=True)
class WerBreakdown:
    """Pooled error counts and the rate they imply."""

    substitutions: int
    insertions: int
    deletions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer_percent(self) -> float:
        if self.ref_words == 0:
            return 0.0 if self.errors == 0 else float("inf")
        return 100.0 * self.errors / self.ref_words

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        return WerBreakdown(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_words + other.ref_words,
        )


def wer_counts(ref: Sequence[str], hyp: Sequence[str]) -> WerBreakdown:
    """Error breakdown for one utterance."""
    subs = ins = dels = 0
    for step in align(ref, hyp):
        if step.op is EditOp.SUB:
            subs += 1
        elif step.op is EditOp.INS:
            ins += 1
        elif step.op is EditOp.DEL:
            dels += 1
    return WerBreakdown(subs, ins, dels, len(ref))


def corpus_wer(
    refs: Mapping[str, Sequence[str]],
    hyps: Mapping[str, Sequence[str]],
) -> WerBreakdown:
    """Pool counts over every hypothesis key.

    Raises:
        MissingReference: if a hypothesis key has no reference.
    """
    total = WerBreakdown(0, 0, 0, 0)
    for key, hyp in hyps.items():
        if key not in refs:
            raise MissingReference(f"no reference transcript for {key!r}")
        total = total + wer_counts(refs[key], hyp)
    return total


class RelativeChange(NamedTuple):
    paper_convention: float
    standard_convention: float


def relative_change(pre_wer: float, post_wer: float) -> RelativeChange:
    """Relative WER change between two systems, in both conventions.

    Raises:
        NonPositiveWer: if either rate is not strictly positive.
    """
    if not pre_wer > 0 or not post_wer > 0:
        raise NonPositiveWer(f"relative change needs positive rates, got pre={pre_wer} post={post_wer}")
    delta = post_wer - pre_wer
    return RelativeChange(100.0 * delta / post_wer, 100.0 * delta / pre_wer)


@dataclass(frozen=True)
class SweepCell:
    """Result of one (test_set, lm_scale, wip) grid cell."""

    test_set: str
    lm_scale: float
    wip: float
    breakdown: WerBreakdown
    baseline: WerBreakdown | None = None
    change: RelativeChange | None = None


_CSV_HEADER = "test_set,lm_scale,wip,wer,subs,ins,dels,ref_words,change_paper,change_standard"


def _fmt_knob(value: float) -> str:
    return f"{value:g}"


@dataclass(frozen=True)
class SweepReport:
    """Full sweep grid with CSV and aligned-table renderings."""

    cells: tuple[SweepCell, ...]

    def cell(self, test_set: str, lm_scale: float, wip: float) -> SweepCell:
        for cell in self.cells:
            if cell.test_set == test_set and cell.lm_scale == lm_scale and cell.wip == wip:
                return cell
        raise KeyError((test_set, lm_scale, wip))

    def to_csv(self) -> str:
        lines = [_CSV_HEADER]
        for cell in self.cells:
            b = cell.breakdown
            change_paper = f"{cell.change.paper_convention:.2f}" if cell.change else ""
            change_standard = f"{cell.change.standard_convention:.2f}" if cell.change else ""
            lines.append(
                ",".join(
                    [
                        cell.test_set,
                        _fmt_knob(cell.lm_scale),
                        _fmt_knob(cell.wip),
                        f"{b.wer_percent:.2f}",
                        str(b.substitutions),
                        str(b.insertions),
                        str(b.deletions),
                        str(b.ref_words),
                        change_paper,
                        change_standard,
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        """Aligned text grid: one block per test set, scales down, WIPs across.

        When baselines are present each WIP gets a pre and a post column.
        """
        blocks: list[str] = []
        test_sets = list(dict.fromkeys(cell.test_set for cell in self.cells))
        for test_set in test_sets:
            cells = [c for c in self.cells if c.test_set == test_set]
            scales = list(dict.fromkeys(c.lm_scale for c in cells))
            wips = list(dict.fromkeys(c.wip for c in cells))
            with_baseline = any(c.baseline is not None for c in cells)
            header = ["lm_scale"]
            for wip in wips:
                if with_baseline:
                    header.append(f"wip {_fmt_knob(wip)} pre")
                    header.append(f"wip {_fmt_knob(wip)} post")
                else:
                    header.append(f"wip {_fmt_knob(wip)}")
            rows = [header]
            by_key = {(c.lm_scale, c.wip): c for c in cells}
            for scale in scales:
                row = [_fmt_knob(scale)]
                for wip in wips:
                    cell = by_key[(scale, wip)]
                    if with_baseline:
                        pre = f"{cell.baseline.wer_percent:.2f}" if cell.baseline else "-"
                        row.append(pre)
                    row.append(f"{cell.breakdown.wer_percent:.2f}")
                rows.append(row)
            widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
            lines = [f"test_set: {test_set}"]
            for row in rows:
                lines.append("  ".join(col.rjust(widths[i]) for i, col in enumerate(row)))
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"


def merge_reports(reports: Iterable[SweepReport]) -> SweepReport:
    cells: list[SweepCell] = []
    for report in reports:
        cells.extend(report.cells)
    return SweepReport(cells=tuple(cells))


def _decode_words(lattice: Lattice, cfg: RescoreConfig) -> list[str]:
    return list(best_path(lattice, cfg).words)


def sweep(
    lattices: Mapping[str, Lattice],
    lm: LmScorer | None,
    refs: Mapping[str, Sequence[str]],
    scales: Sequence[float],
    wips: Sequence[float],
    cfg: RescoreConfig = RescoreConfig(),
    test_set: str = "test",
    include_baseline: bool = True,
    nbest_k: int = 50,
) -> SweepReport:
    """Evaluate WER over the full (lm_scale x wip) grid.

    With an n-gram lm (anything exposing ``order``) each lattice is
    rescored once (lm_interp comes from cfg) and decoded per cell; an
    unbounded scorer routes through n-best rescoring with nbest_k
    hypotheses per utterance. With lm=None the grid reports raw decodes
    and carries no change columns. Baseline cells decode the original
    lattices under the same knobs; change is omitted for a cell whenever
    either rate is zero.

    Cell values are independent of grid evaluation order.
    """
    keys = list(lattices)
    rescored: dict[str, Lattice] | None = None
    if lm is not None and isinstance(getattr(lm, "order", None), int):
        rescored = {key: rescore_lattice(lattices[key], lm, cfg) for key in keys}

    cells: list[SweepCell] = []
    for scale in scales:
        for wip in wips:
            cell_cfg = replace(cfg, lm_scale=scale, wip=wip)
            if lm is None:
                hyps = {key: _decode_words(lattices[key], cell_cfg) for key in keys}
            elif rescored is not None:
                hyps = {key: _decode_words(rescored[key], cell_cfg) for key in keys}
            else:
                hyps = {
                    key: list(rescore_nbest(lattices[key], lm, nbest_k, cell_cfg).hypotheses[0].words)
                    for key in keys
                }
            breakdown = corpus_wer(refs, hyps)

            baseline = None
            change = None
            if lm is not None and include_baseline:
                base_hyps = {key: _decode_words(lattices[key], cell_cfg) for key in keys}
                baseline = corpus_wer(refs, base_hyps)
                try:
                    change = relative_change(baseline.wer_percent, breakdown.wer_percent)
                except NonPositiveWer:
                    change = None
            cells.append(
                SweepCell(
                    test_set=test_set,
                    lm_scale=scale,
                    wip=wip,
                    breakdown=breakdown,
                    baseline=baseline,
                    change=change,
                )
            )
    return SweepReport(cells=tuple(cells))
