import os

import matplotlib
import pandas as pd

matplotlib.use("Agg")
import matplotlib.pyplot as plt

LOG_FIELDS = ("stage", "pass", "train_loss", "dev_score", "kept")


class TrainingLog:
    """Per-pass training records, appended to a CSV file when a path is given.

    The header is written when the file is first created. Rows carry no timestamps, so
    identical runs produce identical logs.
    """

    def __init__(self, log_file_path=None, stage="generator"):
        self.log_file_path = log_file_path
        self.stage = stage
        self.records = []

    def append(self, pass_index, train_loss, dev_score, kept):
        record = {
            "stage": self.stage,
            "pass": int(pass_index),
            "train_loss": float(train_loss),
            "dev_score": float(dev_score),
            "kept": bool(kept),
        }
        self.records.append(record)
        if self.log_file_path is not None:
            self._write(record)
        return record

    def _write(self, record):
        is_new_file = False
        if not os.path.isfile(self.log_file_path):
            dir, _ = os.path.split(self.log_file_path)
            if dir:
                os.makedirs(dir, exist_ok=True)
            is_new_file = True

        with open(self.log_file_path, "a") as f:
            if is_new_file:
                headers = ",".join([f'"{_}"' for _ in LOG_FIELDS])
                f.write(f"{headers}\n")

            values = [record[_] for _ in LOG_FIELDS]
            row = ",".join([f"{_:.6f}" if isinstance(_, float) else f"{_}" for _ in values])
            f.write(f"{row}\n")

    def to_frame(self):
        return pd.DataFrame(self.records, columns=list(LOG_FIELDS))

    def __len__(self):
        return len(self.records)


def read_log(log_file_path):
    df = pd.read_csv(log_file_path, comment=None, header=0, skip_blank_lines=True)
    df.columns = df.columns.str.strip('"')
    return df.reset_index(drop=True)


def plot_log(log_file_path, output_dir, stage=None, size=None):
    """Render train loss and dev score per pass; returns the PNG path."""
    df = read_log(log_file_path)
    if stage is not None:
        df = df[df["stage"] == stage]
    if df.empty:
        raise ValueError(f"No records{f' for stage {stage}' if stage else ''} in {log_file_path}")

    fig, (ax_loss, ax_dev) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    for name, group in df.groupby("stage", sort=True):
        ax_loss.plot(group["pass"], group["train_loss"], label=name)
        ax_dev.plot(group["pass"], group["dev_score"], label=name)
        kept = group[group["kept"].astype(str) == "True"]
        ax_dev.scatter(kept["pass"], kept["dev_score"], marker="o", s=12)

    ax_loss.set_title("Training log")
    ax_loss.set_ylabel("Train loss")
    ax_dev.set_xlabel("Pass")
    ax_dev.set_ylabel("Dev score")
    ax_loss.legend()

    if size:
        w, h = size
        fig.set_size_inches(w / 100, h / 100)

    plot_dir = os.path.join(output_dir, "plots")
    os.makedirs(plot_dir, exist_ok=True)

    base = os.path.splitext(os.path.basename(log_file_path))[0]
    plot_filename = os.path.join(plot_dir, f"{base}{'_' + stage if stage else ''}.png")
    fig.savefig(plot_filename)
    plt.close(fig)
    return plot_filename
