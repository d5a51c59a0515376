"""Record files (JSON Lines corpora), system outputs, run manifests and content hashes."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
from collections.abc import Iterable, Sequence

from .context import DAConfig
from .delex import Instance
from .dialogue_acts import parse_da, serialize_da
from .exceptions import CorpusFormatError, MorphoNLGError
from .morphology import parse_tag

logger = logging.getLogger(__name__)

FIELDS = ("da", "text", "delex_text", "lemmas", "tags", "delex_tags")


def _tokens(value, path, line):
    if value is None:
        return None
    if isinstance(value, str):
        return tuple(value.split())
    if isinstance(value, list) and all(isinstance(t, str) for t in value):
        return tuple(value)
    raise CorpusFormatError(path, line, "token fields must be a string or a list of strings")


def instance_from_record(record: dict, config: DAConfig | None = None, path="<record>", line=0) -> Instance:
    if not isinstance(record, dict) or "da" not in record or "text" not in record:
        raise CorpusFormatError(path, line, "a record needs 'da' and 'text' fields")
    try:
        da = parse_da(record["da"], config)
        tags = _tokens(record.get("tags"), path, line)
        delex_tags = _tokens(record.get("delex_tags"), path, line)
        return Instance(
            da=da,
            text=_tokens(record["text"], path, line),
            delex_text=_tokens(record.get("delex_text"), path, line),
            lemmas=_tokens(record.get("lemmas"), path, line),
            tags=tuple(parse_tag(t) for t in tags) if tags is not None else None,
            delex_tags=tuple(parse_tag(t) for t in delex_tags) if delex_tags is not None else None,
        )
    except CorpusFormatError:
        raise
    except MorphoNLGError as e:
        raise CorpusFormatError(path, line, str(e)) from e


def instance_to_record(inst: Instance) -> dict:
    record = {"da": serialize_da(inst.da), "text": list(inst.text)}
    for name in FIELDS[2:]:
        value = getattr(inst, name)
        if value is not None:
            record[name] = [str(v) for v in value]
    return record


def read_corpus(path, config: DAConfig | None = None) -> list[Instance]:
    """Read JSON Lines records; a ``.json`` file holding one array of records is accepted too."""
    instances = []
    with open(path, encoding="utf-8") as f:
        if str(path).endswith(".json"):
            try:
                records = json.load(f)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(path, e.lineno, e.msg) from e
            if not isinstance(records, list):
                raise CorpusFormatError(path, 1, "expected a JSON array of records")
            return [instance_from_record(r, config, path, i + 1) for i, r in enumerate(records)]
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(path, line_number, e.msg) from e
            instances.append(instance_from_record(record, config, path, line_number))
    logger.info("Read %d instances from %s", len(instances), path)
    return instances


def write_corpus(instances: Iterable[Instance], path):
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps(instance_to_record(inst), ensure_ascii=False) + "\n")


def write_outputs(rows: Iterable[dict], path):
    """System outputs: one JSON record per instance (``da``, ``delex``, ``output``)."""
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_outputs(path, required: Sequence[str] = ("output",)) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(path, line_number, e.msg) from e
            for name in required:
                if name not in row:
                    raise CorpusFormatError(path, line_number, f"missing '{name}' field")
            rows.append(row)
    return rows


def write_review(review: Sequence[tuple[str, str]], path):
    """One relexicalized sentence per line, after its DA and a tab."""
    with open(path, "w", encoding="utf-8") as f:
        for da, text in review:
            f.write(f"{da}\t{text}\n")


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(path, *, command: str, args: dict, seed, config: dict, inputs: Sequence = (),
                   outputs: Sequence = ()):
    """Record what a run read and wrote; no timestamps, so identical reruns give identical manifests."""
    manifest = {
        "command": command,
        "args": {k: v for k, v in sorted(args.items())},
        "seed": seed,
        "config_hash": config_hash(config),
        "config": config,
        "inputs": {str(p): file_hash(p) for p in inputs if os.path.isfile(p)},
        "outputs": sorted(str(p) for p in outputs),
        "python": f"{sys.version_info.major}.{sys.version_info.minor}",
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return manifest
