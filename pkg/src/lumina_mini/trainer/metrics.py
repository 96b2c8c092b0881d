"""Per-step training metrics as CSV."""

from __future__ import annotations

from dataclasses import dataclass

COLUMNS = ("step", "stage", "loss", "aux_loss", "lr", "wall_ms")


@dataclass
class MetricRow:
    step: int
    stage: int
    loss: float
    aux_loss: float
    lr: float
    wall_ms: float


class MetricsLog:
    """Appends one CSV row per training step. I/O errors propagate so the
    trainer halts cleanly at a step boundary."""

    def __init__(self, path=None):
        self.path = path
        self.rows: list[MetricRow] = []
        if path is not None:
            with open(path, "w", encoding="ascii") as f:
                f.write(",".join(COLUMNS) + "\n")

    def append(self, row: MetricRow) -> None:
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", encoding="ascii") as f:
                f.write(
                    f"{row.step},{row.stage},{row.loss!r},{row.aux_loss!r},"
                    f"{row.lr!r},{row.wall_ms!r}\n"
                )

    @staticmethod
    def parse(path) -> list:
        rows = []
        with open(path, "r", encoding="ascii") as f:
            header = f.readline().strip().split(",")
            if tuple(header) != COLUMNS:
                raise ValueError(f"unexpected metrics header {header}")
            for line in f:
                step, stage, loss, aux, lr, wall = line.strip().split(",")
                rows.append(
                    MetricRow(int(step), int(stage), float(loss), float(aux), float(lr), float(wall))
                )
        return rows
