from pathlib import Path


def expand_user_path(value):
    if value is None:
        return None
    return str(Path(value).expanduser())


def run_artifact_paths(base):
    base_path = Path(base)
    return {
        "model": base_path / "model.json",
        "model_crc": base_path / "model-crc.json",
        "predictions": base_path / "predictions.csv",
        "metrics_summary": base_path / "metrics.json",
        "metrics_table": base_path / "metrics.csv",
        "sweep_table": base_path / "sweep.csv",
        "scores": base_path / "scores.csv",
    }
