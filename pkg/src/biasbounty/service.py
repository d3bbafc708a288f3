"""The live bias-bounty program over HTTP.

One process serves the current model, the public data splits, and a
submission endpoint. Submissions are judged strictly in arrival order by a
single validator; every verdict is written to an append-only ledger (and
fsynced) before the response goes out, so a crash never loses an
acknowledged verdict and a restart replays the ledger back to a
byte-identical model.

Trust boundary: the checker holdout influences responses only through
verdict bits. Train and test splits are public; the holdout is never
serialized anywhere, including this module's ledger.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .certify import CheckerConfig, CheckerState, required_holdout_size
from .dataset import (
    FeatureSchema,
    LabeledDataset,
    SchemaMismatchError,
    csv_text,
    group_mass,
    load_csv,
    loss_on,
    split,
)
from .engine import EngineRun, HistoryEntry
from .pdl import groups_of, pdl_from_doc, pdl_to_doc, prefix_model
from .predictor import (
    BINARY,
    DocumentError,
    Predictor,
    canonical_json,
    deserialize,
    fit_tree_classifier,
    predictor_from_doc,
    validate_against_schema,
)

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or incomplete service configuration."""


class LedgerError(RuntimeError):
    """The ledger on disk cannot be replayed into a consistent program state."""


_CONFIG_KEYS = {
    "epsilon", "delta", "max_submissions", "bounty_unit", "label_column",
    "data_csv", "split_fractions", "seed", "train_csv", "holdout_csv",
    "test_csv", "schema_json", "initial_model", "host", "port",
    "ledger_path", "snapshot_interval", "max_doc_bytes",
}


@dataclass(frozen=True)
class ProgramConfig:
    epsilon: float
    label_column: str
    max_submissions: int = 1000
    delta: float = 0.05
    bounty_unit: int = 100
    data_csv: str | None = None
    split_fractions: tuple[float, ...] = (0.7, 0.2, 0.1)
    seed: int = 0
    train_csv: str | None = None
    holdout_csv: str | None = None
    test_csv: str | None = None
    schema_json: str | None = None
    initial_model: str | None = None
    host: str = "127.0.0.1"
    port: int = 8711
    ledger_path: str = "ledger.jsonl"
    snapshot_interval: int = 1
    max_doc_bytes: int = 1 << 20

    def __post_init__(self):
        explicit = (self.train_csv, self.holdout_csv, self.test_csv)
        if self.data_csv is None and not all(explicit):
            raise ConfigError("config needs either data_csv or all of train_csv/holdout_csv/test_csv")
        if self.data_csv is not None and any(explicit):
            raise ConfigError("data_csv and explicit split paths are mutually exclusive")
        if len(self.split_fractions) != 3:
            raise ConfigError("split_fractions must name train, holdout, and test shares")
        if self.snapshot_interval < 1:
            raise ConfigError("snapshot_interval must be >= 1")
        if self.max_doc_bytes < 2:
            raise ConfigError("max_doc_bytes is too small")

    @classmethod
    def from_file(cls, path) -> "ProgramConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "epsilon" not in doc or "label_column" not in doc:
            raise ConfigError("config requires epsilon and label_column")
        base = path.parent

        def resolve(key):
            if doc.get(key) is not None:
                doc[key] = str(base / doc[key]) if not os.path.isabs(doc[key]) else doc[key]

        for key in ("data_csv", "train_csv", "holdout_csv", "test_csv",
                    "schema_json", "initial_model", "ledger_path"):
            resolve(key)
        if "split_fractions" in doc:
            doc["split_fractions"] = tuple(doc["split_fractions"])
        return cls(**doc)


class Ledger:
    """Append-only line-delimited record store with write-ahead durability."""

    def __init__(self, path):
        self.path = Path(path)
        self._handle = None

    def append(self, record: dict) -> None:
        if self._handle is None:
            self._handle = self.path.open("a", encoding="utf-8")
        self._handle.write(canonical_json(record) + "\n")
        self._handle.flush()
        os.fsync(self._handle.fileno())

    def read_all(self) -> list[dict]:
        if not self.path.exists():
            return []
        records = []
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise LedgerError(f"{self.path}:{lineno}: corrupt record: {exc}") from None
        return records

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


class _Oversized(DocumentError):
    pass


class BountyProgram:
    """Program state: data splits, engine, ledger, and bounty accounting."""

    def __init__(self, config: ProgramConfig):
        self.config = config
        self._lock = threading.Lock()
        self._load_data()
        self._f0 = self._initial_model()
        checker_config = CheckerConfig(
            epsilon=config.epsilon,
            max_submissions=config.max_submissions,
            holdout=self.holdout,
            delta=config.delta,
        )
        self.engine = EngineRun(self._f0, checker_config, monotone=True)
        self.records: list[dict] = []
        self._accepts_since_snapshot = 0
        self.ledger = Ledger(config.ledger_path)
        self._replay()
        recommended = required_holdout_size(config.epsilon, config.delta, config.max_submissions)
        if self.holdout.n < recommended:
            logger.warning(
                "holdout has %d rows; %d are needed for the %g-confidence guarantee at epsilon=%g, U=%d",
                self.holdout.n, recommended, 1 - config.delta, config.epsilon, config.max_submissions,
            )

    # -- construction ---------------------------------------------------

    def _load_data(self):
        cfg = self.config
        hint = None
        if cfg.schema_json:
            hint = FeatureSchema.from_doc(json.loads(Path(cfg.schema_json).read_text(encoding="utf-8")))
        if cfg.data_csv:
            full = load_csv(cfg.data_csv, cfg.label_column, hint)
            self.train, self.holdout, self.test = split(full, list(cfg.split_fractions), cfg.seed)
        else:
            self.train = load_csv(cfg.train_csv, cfg.label_column, hint)
            self.holdout = load_csv(cfg.holdout_csv, cfg.label_column, self.train.schema)
            self.test = load_csv(cfg.test_csv, cfg.label_column, self.train.schema)
        self.schema = self.train.schema
        self.train_csv_bytes = csv_text(self.train, cfg.label_column).encode("utf-8")
        self.schema_bytes = canonical_json(self.schema.to_doc()).encode("utf-8")

    def _initial_model(self) -> Predictor:
        if self.config.initial_model:
            p = deserialize(Path(self.config.initial_model).read_text(encoding="utf-8"))
            if not isinstance(p, Predictor) or p.output != BINARY:
                raise ConfigError("initial_model must be a binary predictor document")
            validate_against_schema(p, self.schema)
            return p
        return fit_tree_classifier(self.train, max_depth=1)

    # -- replay -----------------------------------------------------------

    def _replay(self):
        records = self.ledger.read_all()
        if not records:
            return
        submissions = [r for r in records if r.get("kind") == "submission"]
        snapshots = [r for r in records if r.get("kind") == "snapshot"]
        for expected, rec in enumerate(submissions, start=1):
            if rec.get("id") != expected:
                raise LedgerError(f"submission ids are not dense: expected {expected}, got {rec.get('id')}")
        self.records = submissions
        replay_from = 0
        if snapshots:
            snap = snapshots[-1]
            self.engine.model = pdl_from_doc(snap["model"])
            checker = snap["checker"]
            self.engine.checker = CheckerState(
                accepted_count=checker["accepted"],
                processed_count=checker["processed"],
                halted=checker["halted"],
                transcript=tuple(c == "A" for c in checker["transcript"]),
            )
            self.engine.history = [
                HistoryEntry(item[0], bool(item[1]), int(item[2])) for item in snap["history"]
            ]
            replay_from = snap["after_id"]
        for rec in submissions:
            if rec["id"] <= replay_from or rec["verdict"] == "parse_rejected":
                continue
            group = predictor_from_doc(rec["group"])
            model = predictor_from_doc(rec["model"])
            outcome = self.engine.process(group, model, submission_id=rec["id"])
            verdict = "accepted" if outcome.accepted else "rejected"
            if verdict != rec["verdict"] or outcome.round_after != rec["model_level_after"]:
                raise LedgerError(
                    f"replay diverged at submission {rec['id']}: "
                    f"recomputed {verdict}/level {outcome.round_after}, "
                    f"ledger says {rec['verdict']}/level {rec['model_level_after']}"
                )
            if outcome.accepted:
                self._accepts_since_snapshot += 1

    # -- submission path ---------------------------------------------------

    @property
    def halted(self) -> bool:
        return self.engine.halted

    def _parse_submission(self, body: bytes):
        try:
            payload = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DocumentError(f"submission body is not valid JSON: {exc}") from None
        if not isinstance(payload, dict) or set(payload) != {"group", "model"}:
            raise DocumentError("submission must have exactly the fields group, model")
        out = []
        for key in ("group", "model"):
            doc = payload[key]
            if len(canonical_json(doc).encode("utf-8")) > self.config.max_doc_bytes:
                raise _Oversized(f"{key} document exceeds {self.config.max_doc_bytes} bytes")
            p = predictor_from_doc(doc)
            if not isinstance(p, Predictor) or p.output != BINARY:
                raise DocumentError(f"{key} document must describe a binary predictor")
            validate_against_schema(p, self.schema)
            out.append(p)
        return out[0], out[1]

    def submit(self, submitter: str, body: bytes) -> tuple[int, dict]:
        with self._lock:
            if self.halted:
                return 410, {"detail": "program has halted; submissions are closed"}
            if len(body) > 2 * self.config.max_doc_bytes + 4096:
                return 413, {"detail": "request body exceeds the document size limit"}
            submission_id = len(self.records) + 1
            received = datetime.now(timezone.utc).isoformat(timespec="seconds")
            try:
                group, model = self._parse_submission(body)
            except (DocumentError, SchemaMismatchError) as exc:
                record = {
                    "kind": "submission",
                    "id": submission_id,
                    "submitter": submitter,
                    "received_at": received,
                    "verdict": "parse_rejected",
                    "error": str(exc),
                    "model_level_after": self.engine.round,
                }
                self.records.append(record)
                self.ledger.append(record)
                status = 413 if isinstance(exc, _Oversized) else 422
                return status, {"id": submission_id, "detail": str(exc)}
            outcome = self.engine.process(group, model, submission_id=submission_id)
            verdict = "accepted" if outcome.accepted else "rejected"
            record = {
                "kind": "submission",
                "id": submission_id,
                "submitter": submitter,
                "received_at": received,
                "group": group.to_doc(),
                "model": model.to_doc(),
                "verdict": verdict,
                "model_level_after": outcome.round_after,
            }
            self.records.append(record)
            self.ledger.append(record)
            if outcome.accepted:
                self._accepts_since_snapshot += 1
                if self._accepts_since_snapshot >= self.config.snapshot_interval:
                    self._write_snapshot(submission_id)
            return 200, {"id": submission_id, "verdict": verdict, "round_after": outcome.round_after}

    def _write_snapshot(self, after_id: int):
        checker = self.engine.checker
        record = {
            "kind": "snapshot",
            "after_id": after_id,
            "round": self.engine.round,
            "model": pdl_to_doc(self.engine.model),
            "checker": {
                "accepted": checker.accepted_count,
                "processed": checker.processed_count,
                "halted": checker.halted,
                "transcript": "".join("A" if bit else "R" for bit in checker.transcript),
            },
            "history": [
                [entry.submission_id, entry.accepted, entry.resulting_level]
                for entry in self.engine.history
            ],
        }
        self.ledger.append(record)
        self._accepts_since_snapshot = 0

    # -- read side -----------------------------------------------------------

    def model_document(self) -> bytes:
        model = self.engine.model
        return canonical_json({"round": model.level, "model": pdl_to_doc(model)}).encode("utf-8")

    def test_report(self) -> dict:
        from .predictor import serialize as serialize_predictor

        model = self.engine.model
        rounds = list(range(model.level + 1))
        prefixes = [prefix_model(model, r) for r in rounds]
        overall = [loss_on(self.test, p) for p in prefixes]
        groups = []
        for g in groups_of(model):
            key = serialize_predictor(g)
            introduced = next(
                level for level, node in enumerate(model.nodes, start=1)
                if serialize_predictor(node.group) == key
            )
            if group_mass(self.test, g) > 0:
                losses = [loss_on(self.test, p, g) for p in prefixes]
            else:
                losses = [None for _ in prefixes]
            groups.append({"id": f"g{introduced}", "introduced_round": introduced, "losses": losses})
        return {"rounds": rounds, "overall": overall, "groups": groups}

    def transcript(self) -> list[dict]:
        return [
            {"id": r["id"], "verdict": r["verdict"]}
            for r in list(self.records)
            if r["verdict"] in ("accepted", "rejected")
        ]

    def leaderboard(self) -> list[dict]:
        counts: dict[str, int] = {}
        for r in list(self.records):
            if r["verdict"] == "accepted":
                counts[r["submitter"]] = counts.get(r["submitter"], 0) + 1
        rows = [
            {"submitter": s, "accepted": k, "payout": k * self.config.bounty_unit}
            for s, k in counts.items()
        ]
        rows.sort(key=lambda row: (-row["accepted"], row["submitter"]))
        return rows

    def close(self):
        self.ledger.close()


def create_app(program: BountyProgram) -> FastAPI:
    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )
    app.state.program = program

    @app.get("/v1/model")
    def get_model():
        return Response(program.model_document(), media_type="application/json")

    @app.get("/v1/schema")
    def get_schema():
        return Response(program.schema_bytes, media_type="application/json")

    @app.get("/v1/train-data")
    def get_train_data():
        return Response(program.train_csv_bytes, media_type="text/csv")

    @app.get("/v1/test-report")
    def get_test_report():
        return JSONResponse(program.test_report())

    @app.get("/v1/transcript")
    def get_transcript():
        return JSONResponse(program.transcript())

    @app.get("/v1/leaderboard")
    def get_leaderboard():
        return JSONResponse(program.leaderboard())

    @app.post("/v1/submissions")
    async def post_submission(request: Request):
        submitter = request.headers.get("x-submitter-key")
        if not submitter:
            return JSONResponse({"detail": "missing X-Submitter-Key header"}, status_code=400)
        body = await request.body()
        status, payload = program.submit(submitter, body)
        return JSONResponse(payload, status_code=status)

    return app


def serve(config_path) -> None:
    import uvicorn

    config = ProgramConfig.from_file(config_path)
    program = BountyProgram(config)
    app = create_app(program)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
