import csv
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
import hashlib
import json
from pathlib import Path
from string import Formatter
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union


MANIFEST_SUFFIX = ".manifest.json"


class Timer:
    """Context manager measuring the wall time of a command body."""

    def __init__(self):
        self.start_time: Optional[datetime] = None
        self.end_time: Optional[datetime] = None

    def __enter__(self):
        self.start_time = datetime.now()
        return self

    def __exit__(self, *args):
        self.end_time = datetime.now()

    @property
    def duration(self) -> Optional[timedelta]:
        """Return the elapsed time, still running if the body has not exited."""
        if self.start_time is None:
            return None
        return (self.end_time or datetime.now()) - self.start_time

    @property
    def seconds(self) -> Optional[float]:
        if elapsed := self.duration:
            return elapsed.total_seconds()
        return None


def strfdelta(delta: timedelta, fmt: str = "{H:01}h {M:01}m {S:01.1f}s") -> str:
    """
    Format a timedelta with the fields H, M, S (and optionally D).

    Seconds keep the fractional remainder; every other field is an integer.

    Parameters
    ----------
    delta : timedelta
        The duration to format.
    fmt : str, default "{H:01}h {M:01}m {S:01.1f}s"
        A str.format template naming a subset of D, H, M and S.
    """
    remainder = delta.total_seconds()
    formatter = Formatter()
    wanted = {parsed[1] for parsed in formatter.parse(fmt)}
    values = {}
    for name, size in (("D", 86400), ("H", 3600), ("M", 60)):
        if name in wanted:
            whole, remainder = divmod(remainder, size)
            values[name] = int(whole)
    values["S"] = remainder
    return formatter.format(fmt, **values)


def file_sha256(path: Union[Path, str]) -> str:
    """Return the hex SHA-256 digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, mode="rb") as stream:
        for chunk in iter(lambda: stream.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_csv_rows(
    path: Union[Path, str], columns: Sequence[str], rows: Iterable[Dict[str, Any]]
) -> Path:
    """
    Write dict rows under a fixed header; floats use repr so reruns are byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, mode="w", newline="") as stream:
        writer = csv.DictWriter(stream, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: repr(v) if isinstance(v, float) else v for k, v in row.items()}
            )
    return path


def write_json(path: Union[Path, str], document: Any) -> Path:
    """
    Write `document` as indented JSON with sorted keys and a final newline.

    Parent directories are created as needed. Returns the path written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, mode="w") as stream:
        json.dump(document, stream, indent=2, sort_keys=True)
        stream.write("\n")
    return path


def manifest_path_for(output_path: Union[Path, str]) -> Path:
    """`results/sweep.csv` -> `results/sweep.csv.manifest.json`."""
    output_path = Path(output_path)
    return output_path.with_name(output_path.name + MANIFEST_SUFFIX)


@dataclass
class RunManifest:
    """
    What produced a set of output files, and their hashes.

    `argv` replays the command; `outputs` maps each written path to its
    SHA-256 digest.
    """

    command: str
    argv: List[str]
    parameters: Dict[str, Any]
    seed: Optional[int]
    version: str
    outputs: Dict[str, str] = field(default_factory=dict)

    def record_output(self, path: Union[Path, str]) -> None:
        """Remember the SHA-256 of `path` as it is now."""
        self.outputs[str(path)] = file_sha256(path)

    def mismatches(self) -> List[str]:
        """Return the recorded outputs whose current hash differs (or that vanished)."""
        bad = []
        for path, digest in sorted(self.outputs.items()):
            if not Path(path).exists() or file_sha256(path) != digest:
                bad.append(path)
        return bad

    def write(self, path: Union[Path, str]) -> Path:
        """Write the manifest as JSON to `path` and return it."""
        return write_json(path, asdict(self))

    @classmethod
    def load(cls, path: Union[Path, str]) -> "RunManifest":
        """
        Read a manifest written by `write`.

        Raises
        ------
        FileNotFoundError
            If the given `path` does not exist.
        ValueError
            If the document lacks manifest fields.
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError("The given manifest path does not exist.")
        with open(path, mode="r") as stream:
            document = json.load(stream)
        try:
            return cls(**document)
        except TypeError as err:
            raise ValueError(f"Not a run manifest: {path}") from err
