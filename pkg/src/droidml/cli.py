"""Command-line pipeline.

Subcommands cover the full flow: extract features from raw artifacts,
encode them into one matrix, select columns, train a model, evaluate
pipelines under cross-validation, enumerate vote ensembles, and synthesize
fixture corpora. One JSON config file carries per-stage sections; the
dataset manifest is a CSV mapping app ids to artifact paths.

Exit codes: 0 on success, 1 when some manifest rows failed (extract), 2 on
configuration or contract errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import apk as apk_mod
from . import dyntrace, pcap
from .encoding import (
    FeatureMatrix,
    MatrixKind,
    NgramEncoder,
    SequenceEncoder,
    Vocabulary,
    api_sequence,
    build_vocab,
    concat_matrices,
    encode_frequency,
    encode_usage,
    tcp_feature_matrix,
)
from .ensemble import (
    bases_from_report,
    ensemble_report_doc,
    ensemble_table,
    enumerate_ensembles,
)
from .errors import (
    ConfigError,
    FingerprintMismatch,
    InvalidRecord,
    ManifestError,
    ToolkitError,
)
from .evaluation import (
    compare_models,
    cross_validate,
    pipeline_doc,
    read_report,
    report_doc,
    report_table,
    write_report,
)
from .featsel import (
    SailsSelector,
    ScoreSelector,
    VarianceSelector,
    sails_class_scores,
    write_scores,
)
from .fixtures import ARTIFACT_NAMES, generate_corpus
from .models import grid_search, make_model, save_model
from .records import (
    FeatureKind,
    FeatureRecord,
    FeatureReport,
    Source,
    is_app_id,
    parse_counts,
    serialize_counts,
)

ARTIFACT_COLUMNS = ("apk", "strace", "pcap", "apilog", "callgraph")
MANIFEST_COLUMNS = ("app_id", "label") + ARTIFACT_COLUMNS
LABELS = {"benign": 0, "malware": 1}


@dataclass(frozen=True)
class ManifestRow:
    app_id: str
    label: int
    paths: dict[str, Path]

    def has(self, artifact: str) -> bool:
        return artifact in self.paths


def load_dataset_manifest(path: str | Path) -> list[ManifestRow]:
    """Strict CSV loader: fixed columns, unique 64-hex ids, benign/malware
    labels, at least one existing artifact path per row."""
    import csv

    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest {path} does not exist")
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError("manifest is empty") from None
        if tuple(header) != MANIFEST_COLUMNS:
            raise ManifestError(
                f"expected columns {','.join(MANIFEST_COLUMNS)}, got {','.join(header)}"
            )
        rows: list[ManifestRow] = []
        seen: set[str] = set()
        for lineno, cells in enumerate(reader, 2):
            if len(cells) != len(MANIFEST_COLUMNS):
                raise ManifestError(f"line {lineno}: expected {len(MANIFEST_COLUMNS)} cells")
            record = dict(zip(MANIFEST_COLUMNS, cells))
            app_id = record["app_id"]
            if not is_app_id(app_id):
                raise ManifestError(f"line {lineno}: bad app id {app_id!r}")
            if app_id in seen:
                raise ManifestError(f"line {lineno}: duplicate app id {app_id}")
            seen.add(app_id)
            if record["label"] not in LABELS:
                raise ManifestError(f"line {lineno}: bad label {record['label']!r}")
            paths: dict[str, Path] = {}
            for artifact in ARTIFACT_COLUMNS:
                cell = record[artifact].strip()
                if not cell:
                    continue
                resolved = (path.parent / cell).resolve()
                if not resolved.exists():
                    raise ManifestError(f"line {lineno}: {artifact} path {cell} does not exist")
                paths[artifact] = resolved
            if not paths:
                raise ManifestError(f"line {lineno}: row has no artifacts")
            rows.append(ManifestRow(app_id, LABELS[record["label"]], paths))
    return rows


def _load_config(arg: str | None) -> dict:
    if arg is None:
        return {}
    try:
        doc = json.loads(Path(arg).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config {arg} does not exist") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    return doc


def _section(config: dict, name: str, allowed: set[str]) -> dict:
    section = config.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(sorted(unknown))}")
    return section


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# extract


def _pattern_inputs(section: dict):
    prefixes = (
        tuple(apk_mod.load_pattern_file(section["platform_prefixes"]))
        if "platform_prefixes" in section
        else apk_mod.default_platform_prefixes()
    )
    restricted = (
        apk_mod.load_pattern_file(section["restricted"])
        if "restricted" in section
        else list(apk_mod.default_restricted_patterns())
    )
    suspicious = (
        apk_mod.load_pattern_file(section["suspicious"])
        if "suspicious" in section
        else list(apk_mod.default_suspicious_patterns())
    )
    perm_map = (
        apk_mod.load_api_permission_map(section["api_permission_map"])
        if "api_permission_map" in section
        else list(apk_mod.default_api_permission_map())
    )
    return prefixes, restricted, suspicious, perm_map


def _extract_one(
    row: ManifestRow,
    features_dir: Path,
    meta_dir: Path,
    patterns,
    config_hash: str,
) -> tuple[str, bool]:
    """Extract one row's artifacts. Returns (app_id, parsed) where parsed is
    False on a cache hit."""
    prefixes, restricted, suspicious, perm_map = patterns
    input_hashes = {name: _sha256(p) for name, p in sorted(row.paths.items())}
    meta_path = meta_dir / f"{row.app_id}.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if (
            meta.get("config") == config_hash
            and meta.get("inputs") == input_hashes
            and all((features_dir / name).exists() for name in meta.get("outputs", []))
        ):
            return row.app_id, False

    outputs: list[str] = []

    def write(suffix: str, text: str) -> None:
        name = f"{row.app_id}.{suffix}"
        (features_dir / name).write_text(text, encoding="utf-8")
        outputs.append(name)

    if row.has("apk"):
        data = row.paths["apk"].read_bytes()
        if hashlib.sha256(data).hexdigest() != row.app_id:
            raise InvalidRecord(f"apk content hash does not match app id {row.app_id}")
        report = apk_mod.parse_apk(
            data=data,
            platform_prefixes=prefixes,
            restricted=restricted,
            suspicious=suspicious,
            api_perm_map=perm_map,
        )
        write("features", report.serialize())
        write(
            "apicounts",
            serialize_counts({rec.line(): n for rec, n in report.counts.items()}),
        )
        opcode_lines = [
            " ".join(op.mnemonic for op in method) for method in report.method_opcodes
        ]
        write("opcodes", "".join(line + "\n" for line in opcode_lines))

    dyn_records: set[FeatureRecord] = set()
    dyn_counts: dict[FeatureRecord, int] = {}

    def merge(records, counts) -> None:
        dyn_records.update(records)
        for rec, n in counts.items():
            dyn_counts[rec] = dyn_counts.get(rec, 0) + n

    if row.has("strace"):
        trace = dyntrace.parse_strace(row.paths["strace"], app_id=row.app_id)
        write("syscalls", "".join(name + "\n" for name in trace.names))
        merge(*dyntrace.syscall_records(trace))
    if row.has("apilog"):
        log = dyntrace.parse_api_log(row.paths["apilog"], app_id=row.app_id)
        write("dynapis", "".join(ref.canonical() + "\n" for ref in log.calls))
        merge(*dyntrace.dynamic_api_records(log))
    if row.has("pcap"):
        data = row.paths["pcap"].read_bytes()
        features = pcap.extract_tcp_features(data=data)
        write(
            "tcp",
            "".join(
                f"{name}\t{value!r}\n"
                for name, value in zip(pcap.TCP_FEATURE_NAMES, features.as_tuple())
            ),
        )
        requests = pcap.extract_http_features(data=data)
        http_recs = pcap.http_records(requests)
        merge(http_recs, {})
    if row.has("callgraph"):
        graph = apk_mod.load_call_graph(row.paths["callgraph"])
        seq = api_sequence(graph, row.app_id, prefixes)
        write("routes", "".join(tok + "\n" for tok in seq.tokens))
    if dyn_records or any(row.has(a) for a in ("strace", "apilog", "pcap")):
        dyn_report = FeatureReport(
            app_id=row.app_id, source=Source.DYNAMIC, records=dyn_records, counts=dyn_counts
        )
        write("dynfeatures", dyn_report.serialize())
        write(
            "dyncounts",
            serialize_counts({rec.line(): n for rec, n in dyn_counts.items()}),
        )

    meta = {"config": config_hash, "inputs": input_hashes, "outputs": sorted(outputs)}
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return row.app_id, True


def cmd_extract(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    section = _section(
        config,
        "extract",
        {"platform_prefixes", "restricted", "suspicious", "api_permission_map"},
    )
    rows = load_dataset_manifest(args.manifest)
    out_dir = Path(args.out)
    features_dir = out_dir / "features"
    meta_dir = out_dir / "meta"
    features_dir.mkdir(parents=True, exist_ok=True)
    meta_dir.mkdir(parents=True, exist_ok=True)
    patterns = _pattern_inputs(section)
    config_hash = hashlib.sha256(
        json.dumps(section, sort_keys=True).encode("utf-8")
    ).hexdigest()

    parsed: list[str] = []
    cached: list[str] = []
    failed: dict[str, str] = {}

    def run(row: ManifestRow):
        try:
            return _extract_one(row, features_dir, meta_dir, patterns, config_hash), None
        except ToolkitError as e:
            return (row.app_id, False), f"{type(e).__name__}: {e}"

    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(run, rows))
    else:
        outcomes = [run(row) for row in rows]
    for (app_id, was_parsed), error in outcomes:
        if error is not None:
            failed[app_id] = error
        elif was_parsed:
            parsed.append(app_id)
        else:
            cached.append(app_id)

    summary = {
        "parsed": sorted(parsed),
        "cached": sorted(cached),
        "failed": {k: failed[k] for k in sorted(failed)},
    }
    with open(out_dir / "extract_summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, sort_keys=True, indent=1)
        handle.write("\n")
    print(
        f"extracted {len(parsed)} apps ({len(cached)} cached, {len(failed)} failed)"
        f" into {features_dir}"
    )
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# encode

_TOKEN_SUFFIX = {"opcodes": "opcodes", "syscalls": "syscalls", "dynapis": "dynapis", "routes": "routes"}


def _read_feature_file(features_dir: Path, app_id: str, suffix: str, required: bool) -> str | None:
    path = features_dir / f"{app_id}.{suffix}"
    if not path.exists():
        if required:
            raise FingerprintMismatch(
                f"missing {path.name}; run the extract stage for this manifest first"
            )
        return None
    return path.read_text(encoding="utf-8")


def _load_report(features_dir: Path, row: ManifestRow) -> FeatureReport:
    records: set[FeatureRecord] = set()
    counts: dict[FeatureRecord, int] = {}
    static_text = _read_feature_file(features_dir, row.app_id, "features", row.has("apk"))
    sources = 0
    if static_text is not None:
        part = FeatureReport.deserialize(static_text, row.app_id, Source.STATIC)
        records |= part.records
        sources += 1
        count_text = _read_feature_file(features_dir, row.app_id, "apicounts", row.has("apk"))
        for line, n in parse_counts(count_text or "").items():
            counts[FeatureRecord.parse_line(line)] = n
    has_dyn = any(row.has(a) for a in ("strace", "apilog", "pcap"))
    dyn_text = _read_feature_file(features_dir, row.app_id, "dynfeatures", has_dyn)
    if dyn_text is not None:
        part = FeatureReport.deserialize(dyn_text, row.app_id, Source.DYNAMIC)
        records |= part.records
        sources += 1
        count_text = _read_feature_file(features_dir, row.app_id, "dyncounts", has_dyn)
        for line, n in parse_counts(count_text or "").items():
            counts[FeatureRecord.parse_line(line)] = counts.get(FeatureRecord.parse_line(line), 0) + n
    source = Source.HYBRID if sources != 1 else (Source.STATIC if static_text else Source.DYNAMIC)
    return FeatureReport(app_id=row.app_id, source=source, records=records, counts=counts)


def _load_tokens(features_dir: Path, row: ManifestRow, stream: str) -> list[str]:
    needs = {"opcodes": "apk", "syscalls": "strace", "dynapis": "apilog", "routes": "callgraph"}
    text = _read_feature_file(
        features_dir, row.app_id, _TOKEN_SUFFIX[stream], row.has(needs[stream])
    )
    if text is None:
        return []
    return text.split()


def _parse_kinds(raw) -> frozenset[FeatureKind] | None:
    if raw is None:
        return None
    try:
        return frozenset(FeatureKind(v) for v in raw)
    except ValueError as e:
        raise ConfigError(f"unknown feature kind: {e}") from None


_BLOCK_KEYS = {
    "records": {"name", "type", "kinds", "representation", "min_support"},
    "ngram": {"name", "type", "tokens", "n", "representation", "min_support"},
    "sequence": {"name", "type", "tokens", "max_len", "min_support"},
    "tcp": {"name", "type"},
}


def _encode_block(block: dict, rows: list[ManifestRow], features_dir: Path) -> FeatureMatrix:
    btype = block.get("type")
    if btype not in _BLOCK_KEYS:
        raise ConfigError(f"unknown block type {btype!r}")
    unknown = set(block) - _BLOCK_KEYS[btype]
    if unknown:
        raise ConfigError(f"unknown keys in block {block.get('name')!r}: {sorted(unknown)}")
    if btype == "records":
        reports = [_load_report(features_dir, row) for row in rows]
        kinds = _parse_kinds(block.get("kinds"))
        representation = block.get("representation", "usage")
        min_support = int(block.get("min_support", 1))
        kind = MatrixKind.BINARY if representation == "usage" else MatrixKind.COUNT
        vocab = build_vocab(reports, kinds=kinds, min_support=min_support, kind=kind)
        if representation == "usage":
            return encode_usage(reports, vocab)
        if representation == "frequency":
            return encode_frequency(reports, vocab)
        raise ConfigError(f"unknown representation {representation!r}")
    if btype == "tcp":
        feature_rows = []
        for row in rows:
            text = _read_feature_file(features_dir, row.app_id, "tcp", row.has("pcap"))
            values = [0.0] * len(pcap.TCP_FEATURE_NAMES)
            if text is not None:
                loaded = parse_counts_float(text)
                values = [loaded[name] for name in pcap.TCP_FEATURE_NAMES]
            feature_rows.append((row.app_id, values))
        return tcp_feature_matrix(feature_rows)
    stream = block.get("tokens")
    if stream not in _TOKEN_SUFFIX:
        raise ConfigError(f"unknown token stream {stream!r}")
    sources = [(row.app_id, _load_tokens(features_dir, row, stream)) for row in rows]
    if btype == "ngram":
        encoder = NgramEncoder(
            n=int(block.get("n", 2)),
            min_support=int(block.get("min_support", 1)),
            representation=block.get("representation", "frequency"),
        )
    else:
        encoder = SequenceEncoder(
            max_len=int(block.get("max_len", 2048)),
            min_support=int(block.get("min_support", 1)),
        )
    return encoder.fit_transform(sources)


def parse_counts_float(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        name, _, value = line.rpartition("\t")
        out[name] = float(value)
    return out


def cmd_encode(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    section = _section(config, "encode", {"blocks"})
    blocks = section.get("blocks")
    if not blocks or not isinstance(blocks, list):
        raise ConfigError("encode.blocks must be a non-empty array")
    names = [b.get("name") for b in blocks]
    if any(not isinstance(n, str) or not n for n in names):
        raise ConfigError("every encode block needs a name")
    if len(set(names)) != len(names):
        raise ConfigError("encode block names must be unique")
    rows = load_dataset_manifest(args.manifest)
    out_dir = Path(args.out)
    features_dir = out_dir / "features"
    if not features_dir.exists():
        raise FingerprintMismatch(f"{features_dir} does not exist; run extract first")

    matrix: FeatureMatrix | None = None
    for block in blocks:
        part = _encode_block(block, rows, features_dir)
        if matrix is None:
            tagged = Vocabulary(
                tuple(f"{block['name']}:{n}" for n in part.vocab.entries), part.vocab.kind
            )
            matrix = FeatureMatrix(vocab=tagged, row_ids=part.row_ids, cells=part.cells)
        else:
            matrix = concat_matrices(matrix, part, right_tag=block["name"])

    out_path = out_dir / "matrix.txt"
    out_path.write_text(matrix.to_text(), encoding="utf-8")
    meta = {
        "blocks": names,
        "n_rows": matrix.n_rows,
        "n_cols": matrix.n_cols,
        "kind": matrix.vocab.kind.value,
        "vocab_fingerprint": matrix.vocab.fingerprint(),
        "rows_fingerprint": matrix.rows_fingerprint(),
    }
    with open(out_dir / "matrix.meta.json", "w", encoding="utf-8") as handle:
        json.dump(meta, handle, sort_keys=True, indent=1)
        handle.write("\n")
    print(f"encoded {matrix.n_rows} rows x {matrix.n_cols} columns into {out_path}")
    return 0


# ---------------------------------------------------------------------------
# shared matrix/label plumbing


def _load_matrix(out_dir: Path, section: dict) -> FeatureMatrix:
    name = section.get("matrix", "matrix.txt")
    path = out_dir / name
    if not path.exists():
        raise FingerprintMismatch(f"{path} does not exist; run encode first")
    return FeatureMatrix.from_text(path.read_text(encoding="utf-8"))


def _labels_for(matrix: FeatureMatrix, rows: list[ManifestRow]) -> list[int]:
    by_id = {row.app_id: row.label for row in rows}
    missing = [rid for rid in matrix.row_ids if rid not in by_id]
    if missing:
        raise ManifestError(f"matrix rows missing from manifest: {missing[:3]}")
    return [by_id[rid] for rid in matrix.row_ids]


def _build_selector(spec: dict | None):
    if spec is None:
        return None
    if not isinstance(spec, dict) or "method" not in spec:
        raise ConfigError("selector spec needs a method")
    method = spec["method"]
    if method == "variance":
        return VarianceSelector(threshold=float(spec.get("threshold", 0.0)))
    if method == "sails":
        return SailsSelector(base=spec.get("base", "mi"), k=int(spec.get("k", 10)))
    if method in ("mi", "chi2", "pcc", "ttest", "wfs"):
        return ScoreSelector(
            method=method,
            k=int(spec.get("k", 10)),
            occurrence=spec.get("occurrence", "counts"),
        )
    raise ConfigError(f"unknown selector method {method!r}")


# ---------------------------------------------------------------------------
# select


def cmd_select(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    section = _section(
        config,
        "select",
        {"method", "k", "threshold", "occurrence", "base", "matrix"},
    )
    method = section.get("method", "mi")
    rows = load_dataset_manifest(args.manifest)
    out_dir = Path(args.out)
    matrix = _load_matrix(out_dir, section)
    labels = _labels_for(matrix, rows)
    selector = _build_selector({**section, "method": method})
    selector.fit(matrix, labels)

    names = list(matrix.vocab.entries)
    if isinstance(selector, ScoreSelector):
        params = {k: v for k, v in selector.get_params().items() if k != "method"}
        (out_dir / "scores.tsv").write_text(
            write_scores(selector.scores_, names, params), encoding="utf-8"
        )
    elif isinstance(selector, SailsSelector):
        benign, malware = sails_class_scores(matrix, labels, selector.base)
        lines = ["# selector=SAILS columns=name\tbenign\tmalware"]
        for j, name in enumerate(names):
            lines.append(f"{name}\t{float(benign[j])!r}\t{float(malware[j])!r}")
        (out_dir / "scores.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        from .featsel import column_variances

        variances = column_variances(matrix)
        lines = ["# selector=VarianceThreshold params={} ordering=HigherBetter"]
        for j, name in enumerate(names):
            lines.append(f"{name}\t{float(variances[j])!r}")
        (out_dir / "scores.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    reduced = selector.transform(matrix)
    (out_dir / "matrix_selected.txt").write_text(reduced.to_text(), encoding="utf-8")
    print(
        f"selected {reduced.n_cols} of {matrix.n_cols} columns with {method}"
        f" into {out_dir / 'matrix_selected.txt'}"
    )
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    section = _section(config, "train", {"model", "params", "grid", "matrix"})
    kind = section.get("model")
    if not kind:
        raise ConfigError("train.model is required")
    params = dict(section.get("params", {}))
    rows = load_dataset_manifest(args.manifest)
    out_dir = Path(args.out)
    matrix = _load_matrix(out_dir, section)
    labels = _labels_for(matrix, rows)

    summary: dict = {"model": kind, "params": params}
    if section.get("grid"):
        result = grid_search(kind, section["grid"], matrix, labels, k=3, seed=args.seed)
        params.update(result.params)
        summary["grid_best"] = result.params
        summary["grid_accuracy"] = result.mean_accuracy
        summary["grid_trials"] = [[p, acc] for p, acc in result.trials]
    if "seed" in make_model(kind)._param_names():
        params.setdefault("seed", args.seed)
    model = make_model(kind, params)
    model.fit(matrix, labels)
    save_model(model, out_dir / "model.json")
    summary["params"] = params
    with open(out_dir / "train_summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, sort_keys=True, indent=1)
        handle.write("\n")
    print(f"trained {kind} on {matrix.n_rows} rows into {out_dir / 'model.json'}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    section = _section(config, "eval", {"pipelines", "k", "compare", "matrix"})
    pipelines = section.get("pipelines")
    if not pipelines or not isinstance(pipelines, list):
        raise ConfigError("eval.pipelines must be a non-empty array")
    k = int(section.get("k", 10))
    rows = load_dataset_manifest(args.manifest)
    out_dir = Path(args.out)
    matrix = _load_matrix(out_dir, section)
    labels = _labels_for(matrix, rows)

    docs = []
    results = {}
    for pipe in pipelines:
        allowed = {"name", "model", "params", "selector", "grid"}
        unknown = set(pipe) - allowed
        if unknown:
            raise ConfigError(f"unknown pipeline keys: {sorted(unknown)}")
        name = pipe.get("name")
        kind = pipe.get("model")
        if not name or not kind:
            raise ConfigError("each pipeline needs a name and a model")
        if name in results:
            raise ConfigError(f"duplicate pipeline name {name!r}")
        params = dict(pipe.get("params", {}))
        if "seed" in make_model(kind)._param_names():
            params.setdefault("seed", args.seed)
        model = make_model(kind, params)
        selector = _build_selector(pipe.get("selector"))
        result = cross_validate(
            model, matrix, labels, k=k, seed=args.seed,
            selector=selector, grid=pipe.get("grid"),
        )
        results[name] = result
        docs.append(pipeline_doc(name, kind, params, result))

    comparison = None
    compare_cfg = section.get("compare")
    if compare_cfg and len(results) >= 2:
        metric = compare_cfg.get("metric", "accuracy")
        alpha = float(compare_cfg.get("alpha", 0.05))
        groups = {name: res.metric_values(metric) for name, res in results.items()}
        comparison = compare_models(groups, alpha=alpha)

    doc = report_doc(docs, k=k, seed=args.seed, comparison=comparison)
    write_report(doc, out_dir / "eval_report.json")
    sys.stdout.write(report_table(doc))
    if comparison is not None:
        print(f"omnibus H={comparison.h:.3f} p={comparison.p:.4f} alpha={comparison.alpha}")
        if comparison.pairwise:
            for pw in comparison.as_dict()["pairwise"]:
                verdict = "significant" if pw["significant"] else "not significant"
                print(
                    f"  {pw['a']} vs {pw['b']}: z={pw['z']:.3f}"
                    f" adjusted p={pw['p_adj']:.4f} ({verdict})"
                )
    return 0


# ---------------------------------------------------------------------------
# ensemble


def cmd_ensemble(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    section = _section(config, "ensemble", {"report", "max_size", "cap"})
    out_dir = Path(args.out)
    report_path = out_dir / section.get("report", "eval_report.json")
    if not report_path.exists():
        raise FingerprintMismatch(f"{report_path} does not exist; run eval first")
    doc = read_report(report_path)
    bases = bases_from_report(doc)
    max_size = section.get("max_size")
    results = enumerate_ensembles(
        bases,
        max_size=int(max_size) if max_size is not None else None,
        cap=int(section.get("cap", 4096)),
    )
    out_doc = ensemble_report_doc(results, bases[0].fold_fingerprint)
    with open(out_dir / "ensemble_report.json", "w", encoding="utf-8") as handle:
        json.dump(out_doc, handle, sort_keys=True, indent=1)
        handle.write("\n")
    sys.stdout.write(ensemble_table(out_doc))
    return 0


# ---------------------------------------------------------------------------
# gen-fixtures


def cmd_gen_fixtures(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    section = _section(config, "gen_fixtures", {"benign", "malware", "artifacts", "seed"})
    n_benign = int(section.get("benign", 0))
    n_malware = int(section.get("malware", 0))
    artifacts = tuple(section.get("artifacts", ARTIFACT_NAMES))
    seed = int(section.get("seed", args.seed))
    generate_corpus(args.out, n_benign, n_malware, seed=seed, artifacts=artifacts)
    print(f"generated {n_benign} benign and {n_malware} malware apps in {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="droidml", description="Android malware detection pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "extract": (cmd_extract, "parse raw artifacts into feature files"),
        "encode": (cmd_encode, "build the feature matrix from extracted files"),
        "select": (cmd_select, "score and select matrix columns"),
        "train": (cmd_train, "fit one model on the matrix"),
        "eval": (cmd_eval, "cross-validate pipelines and write a report"),
        "ensemble": (cmd_ensemble, "enumerate vote ensembles from an eval report"),
        "gen-fixtures": (cmd_gen_fixtures, "synthesize a labeled fixture corpus"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file with per-stage sections")
        if name not in ("gen-fixtures",):
            p.add_argument("--manifest", required=name in ("extract", "encode", "select", "train", "eval"), help="dataset manifest CSV")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker threads (output is identical at any level)")
        p.add_argument("--seed", type=int, default=0, help="base random seed")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    Path(args.out).mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args)
    except ToolkitError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
