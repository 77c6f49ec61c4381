"""Field a study over HTTP: serve screens, record choices durably, export.

Persistence is one directory per study: ``config.json`` (items, design,
mode, schema), ``sessions.jsonl`` (one line per opened session) and
``observations.jsonl`` (one line per acknowledged choice). Observation
lines are appended under a per-study lock, flushed and fsynced before the
submission is acknowledged, so an acknowledged choice survives a restart.
Nothing is ever rewritten in place.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

from pydantic import BaseModel

from .design import design_from_dict, design_to_dict, generate_design
from .domain import (
    BEST_ONLY,
    BEST_WORST,
    ChoiceObservation,
    CohortSpec,
    ConflictError,
    Dataset,
    Design,
    DesignSpec,
    InsufficientDataError,
    InvalidInputError,
    Item,
    MaxDiffError,
    NotFoundError,
    observations_to_csv,
)
from .estimator import (
    FitOptions,
    bootstrap_shares,
    fit,
    fit_by_cohort,
    fit_result_to_dict,
    with_intervals,
)

DEFAULT_PROMPT = (
    "Select the feature that is most important to you from the following options:"
)

STUDY_MODES = (BEST_ONLY, BEST_WORST)


@dataclass(frozen=True)
class Study:
    study_id: str
    items: tuple[Item, ...]
    design: Design
    mode: str
    attribute_schema: tuple[str, ...]
    prompt: str
    created_at: str

    @property
    def total_screens(self) -> int:
        return self.design.spec.screens_per_respondent


@dataclass
class Session:
    session_id: str
    study_id: str
    version_index: int
    attributes: dict[str, str]
    cursor: int = 0

    def completed_in(self, study: Study) -> bool:
        return self.cursor >= study.total_screens


@dataclass(frozen=True)
class ScreenView:
    screen_index: int
    prompt: str
    options: tuple[dict, ...]


def _canonical_payload(
    items: Sequence[Item],
    design_doc: dict,
    mode: str,
    attribute_schema: Sequence[str],
    prompt: str,
) -> dict:
    return {
        "items": [
            {"id": i.id, "label": i.label, "description": i.description}
            for i in items
        ],
        "design": design_doc,
        "mode": mode,
        "attribute_schema": list(attribute_schema),
        "prompt": prompt,
    }


def _payload_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class StudyService:
    """Durable study registry plus the session/choice state machine."""

    def __init__(self, data_dir: Path | str):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._studies: dict[str, Study] = {}
        self._payload_hashes: dict[str, str] = {}
        self._sessions: dict[str, Session] = {}
        self._observations: dict[str, list[ChoiceObservation]] = {}
        self._recorded: dict[str, dict[int, ChoiceObservation]] = {}
        self._load()

    # -- persistence -------------------------------------------------------

    def _study_dir(self, study_id: str) -> Path:
        return self.data_dir / study_id

    def _load(self) -> None:
        for config_path in sorted(self.data_dir.glob("*/config.json")):
            doc = json.loads(config_path.read_text(encoding="utf-8"))
            payload = doc["payload"]
            design, _ = design_from_dict(payload["design"])
            study = Study(
                study_id=doc["study_id"],
                items=tuple(Item(**i) for i in payload["items"]),
                design=design,
                mode=payload["mode"],
                attribute_schema=tuple(payload["attribute_schema"]),
                prompt=payload["prompt"],
                created_at=doc["created_at"],
            )
            self._studies[study.study_id] = study
            self._payload_hashes[study.study_id] = _payload_hash(payload)
            self._observations[study.study_id] = []

            sessions_path = self._study_dir(study.study_id) / "sessions.jsonl"
            if sessions_path.exists():
                for line in sessions_path.read_text(encoding="utf-8").splitlines():
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    session = Session(
                        session_id=rec["session_id"],
                        study_id=study.study_id,
                        version_index=rec["version_index"],
                        attributes=dict(rec["attributes"]),
                    )
                    self._sessions[session.session_id] = session
                    self._recorded[session.session_id] = {}

            observations_path = self._study_dir(study.study_id) / "observations.jsonl"
            if observations_path.exists():
                for line in observations_path.read_text(encoding="utf-8").splitlines():
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    obs = ChoiceObservation(
                        respondent_id=rec["respondent_id"],
                        version_index=rec["version_index"],
                        screen_index=rec["screen_index"],
                        shown=tuple(rec["shown"]),
                        best=rec["best"],
                        worst=rec.get("worst"),
                        attributes=dict(rec.get("attributes", {})),
                    )
                    self._observations[study.study_id].append(obs)
                    session = self._sessions.get(obs.respondent_id)
                    if session is not None:
                        session.cursor = max(session.cursor, obs.screen_index + 1)
                        self._recorded[session.session_id][obs.screen_index] = obs

    def _append_jsonl(self, path: Path, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"
        with open(path, "a", encoding="utf-8") as handle:
            handle.write(line)
            handle.flush()
            os.fsync(handle.fileno())

    # -- operations ---------------------------------------------------------

    def create_study(
        self,
        items: Sequence[Item],
        mode: str,
        design: Design | None = None,
        design_spec: DesignSpec | None = None,
        attribute_schema: Sequence[str] = (),
        study_id: str | None = None,
        prompt: str = DEFAULT_PROMPT,
    ) -> str:
        if not items:
            raise InvalidInputError("a study needs at least one item")
        if mode not in STUDY_MODES:
            raise InvalidInputError(f"study mode must be one of {STUDY_MODES}")
        if design is None:
            if design_spec is None:
                raise InvalidInputError("provide a design or a design spec")
            design = generate_design(design_spec)
        if design.spec.n_items != len(items):
            raise InvalidInputError(
                f"design is for {design.spec.n_items} items, study has {len(items)}"
            )
        items = tuple(items)
        design_doc = design_to_dict(design, [i.id for i in items])
        payload = _canonical_payload(items, design_doc, mode, attribute_schema, prompt)
        payload_hash = _payload_hash(payload)
        if study_id is None:
            study_id = f"study-{payload_hash[:12]}"

        with self._lock:
            if study_id in self._studies:
                if self._payload_hashes[study_id] == payload_hash:
                    return study_id
                raise ConflictError(
                    f"study {study_id!r} already exists with a different payload"
                )
            study = Study(
                study_id=study_id,
                items=items,
                design=design,
                mode=mode,
                attribute_schema=tuple(attribute_schema),
                prompt=prompt,
                created_at=datetime.now(timezone.utc).isoformat(),
            )
            study_dir = self._study_dir(study_id)
            study_dir.mkdir(parents=True, exist_ok=True)
            config = {
                "study_id": study_id,
                "created_at": study.created_at,
                "payload": payload,
            }
            (study_dir / "config.json").write_text(
                json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            self._studies[study_id] = study
            self._payload_hashes[study_id] = payload_hash
            self._observations[study_id] = []
            return study_id

    def get_study(self, study_id: str) -> Study:
        study = self._studies.get(study_id)
        if study is None:
            raise NotFoundError(f"unknown study {study_id!r}")
        return study

    def open_session(self, study_id: str, attributes: Mapping[str, str]) -> Session:
        study = self.get_study(study_id)
        missing = [k for k in study.attribute_schema if k not in attributes]
        if missing:
            raise InvalidInputError(
                f"missing required attributes: {', '.join(missing)}"
            )
        with self._lock:
            counts = [0] * len(study.design.versions)
            for session in self._sessions.values():
                if session.study_id == study_id:
                    counts[session.version_index] += 1
            version = counts.index(min(counts))
            session = Session(
                session_id=secrets.token_urlsafe(16),
                study_id=study_id,
                version_index=version,
                attributes=dict(attributes),
            )
            self._append_jsonl(
                self._study_dir(study_id) / "sessions.jsonl",
                {
                    "session_id": session.session_id,
                    "version_index": session.version_index,
                    "attributes": session.attributes,
                },
            )
            self._sessions[session.session_id] = session
            self._recorded[session.session_id] = {}
            return session

    def get_session(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session {session_id!r}")
        return session

    def next_screen(self, session_id: str) -> ScreenView | None:
        """Screen at the session cursor, or None when the session is complete."""
        session = self.get_session(session_id)
        study = self.get_study(session.study_id)
        if session.completed_in(study):
            return None
        screen = study.design.versions[session.version_index][session.cursor]
        return ScreenView(
            screen_index=session.cursor,
            prompt=study.prompt,
            options=tuple(
                {
                    "id": study.items[i].id,
                    "label": study.items[i].label,
                    "description": study.items[i].description,
                }
                for i in screen.item_indices
            ),
        )

    def submit_choice(
        self,
        session_id: str,
        screen_index: int,
        best: str,
        worst: str | None = None,
    ) -> None:
        session = self.get_session(session_id)
        study = self.get_study(session.study_id)
        with self._lock:
            if screen_index < session.cursor:
                recorded = self._recorded[session_id].get(screen_index)
                if (
                    recorded is not None
                    and recorded.best == best
                    and recorded.worst == worst
                ):
                    return  # identical retry: idempotent success
                raise ConflictError(
                    f"screen {screen_index} already answered; first answer wins"
                )
            if screen_index > session.cursor or session.completed_in(study):
                raise ConflictError(
                    f"out-of-order submission: expected screen {session.cursor}"
                )
            screen = study.design.versions[session.version_index][screen_index]
            shown = tuple(study.items[i].id for i in screen.item_indices)
            if best not in shown:
                raise InvalidInputError(f"best {best!r} was not shown on this screen")
            if study.mode == BEST_ONLY and worst is not None:
                raise InvalidInputError("this study records best picks only")
            if study.mode == BEST_WORST:
                if worst is None:
                    raise InvalidInputError("this study requires a worst pick")
                if worst not in shown:
                    raise InvalidInputError(
                        f"worst {worst!r} was not shown on this screen"
                    )
                if worst == best:
                    raise InvalidInputError("worst must differ from best")
            obs = ChoiceObservation(
                respondent_id=session_id,
                version_index=session.version_index,
                screen_index=screen_index,
                shown=shown,
                best=best,
                worst=worst,
                attributes=dict(session.attributes),
            )
            record = {
                "respondent_id": obs.respondent_id,
                "version_index": obs.version_index,
                "screen_index": obs.screen_index,
                "shown": list(obs.shown),
                "best": obs.best,
                "worst": obs.worst,
                "attributes": obs.attributes,
            }
            # Durable before acknowledged: append + fsync, then advance.
            self._append_jsonl(
                self._study_dir(study.study_id) / "observations.jsonl", record
            )
            self._observations[study.study_id].append(obs)
            self._recorded[session_id][screen_index] = obs
            session.cursor = screen_index + 1

    def export_dataset(self, study_id: str) -> Dataset:
        study = self.get_study(study_id)
        return Dataset(
            items=study.items,
            observations=tuple(self._observations[study_id]),
        )

    def export_csv(self, study_id: str) -> str:
        return observations_to_csv(self.export_dataset(study_id).observations)

    def session_stats(self, study_id: str) -> dict:
        study = self.get_study(study_id)
        sessions = [s for s in self._sessions.values() if s.study_id == study_id]
        completed = sum(1 for s in sessions if s.completed_in(study))
        return {
            "n_sessions": len(sessions),
            "n_completed_sessions": completed,
            "n_partial_sessions": len(sessions) - completed,
        }

    def results(
        self,
        study_id: str,
        options: FitOptions = FitOptions(),
        cohorts: Sequence[CohortSpec] | None = None,
        bootstrap_replicates: int = 0,
        bootstrap_seed: int = 0,
    ) -> dict:
        dataset = self.export_dataset(study_id)
        if not dataset.observations:
            raise InsufficientDataError(f"study {study_id!r} has no observations")
        item_ids = dataset.item_ids()
        result = fit(dataset, options)
        if bootstrap_replicates:
            result = with_intervals(
                result,
                bootstrap_shares(dataset, options, bootstrap_replicates, bootstrap_seed),
            )
        payload = {
            "study_id": study_id,
            "fit": fit_result_to_dict(result, item_ids),
            **self.session_stats(study_id),
        }
        if cohorts:
            analysis = fit_by_cohort(dataset, list(cohorts), options)
            payload["cohorts"] = {
                name: fit_result_to_dict(res, item_ids)
                for name, res in analysis.cohorts.items()
            }
            payload["cohort_comparison"] = [
                {
                    "cohort": d.cohort,
                    "item_id": d.item_id,
                    "share_delta": d.share_delta,
                    "rank_shift": d.rank_shift,
                }
                for d in analysis.comparison
            ]
        return payload


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


class ItemBody(BaseModel):
    id: str
    label: str
    description: str = ""


class DesignSpecBody(BaseModel):
    items_per_screen: int
    screens_per_respondent: int
    n_versions: int
    rng_seed: int = 0


class CreateStudyBody(BaseModel):
    items: list[ItemBody]
    mode: str
    design_spec: Optional[DesignSpecBody] = None
    design: Optional[dict] = None
    attribute_schema: list[str] = []
    study_id: Optional[str] = None
    prompt: str = DEFAULT_PROMPT


class OpenSessionBody(BaseModel):
    attributes: dict[str, str] = {}


class ChoiceBody(BaseModel):
    screen_index: int
    best: str
    worst: Optional[str] = None


def create_app(service: StudyService):
    """FastAPI app exposing the study/session/choice contract."""
    from fastapi import FastAPI, Query, Request, Response
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse, PlainTextResponse

    app = FastAPI(title="maxdiff study service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(MaxDiffError)
    async def on_error(request: Request, exc: MaxDiffError):
        status = 400
        if isinstance(exc, NotFoundError):
            status = 404
        elif isinstance(exc, ConflictError):
            status = 409
        elif isinstance(exc, (InvalidInputError, InsufficientDataError)):
            status = 422
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.post("/studies", status_code=201)
    def create_study(body: CreateStudyBody):
        items = tuple(Item(i.id, i.label, i.description) for i in body.items)
        design = None
        design_spec = None
        if body.design is not None:
            design, _ = design_from_dict(body.design)
        elif body.design_spec is not None:
            design_spec = DesignSpec(
                n_items=len(items),
                items_per_screen=body.design_spec.items_per_screen,
                screens_per_respondent=body.design_spec.screens_per_respondent,
                n_versions=body.design_spec.n_versions,
                rng_seed=body.design_spec.rng_seed,
            )
        study_id = service.create_study(
            items=items,
            mode=body.mode,
            design=design,
            design_spec=design_spec,
            attribute_schema=body.attribute_schema,
            study_id=body.study_id,
            prompt=body.prompt,
        )
        study = service.get_study(study_id)
        return {
            "study_id": study_id,
            "total_screens": study.total_screens,
            "n_versions": len(study.design.versions),
        }

    @app.post("/studies/{study_id}/sessions")
    def open_session(study_id: str, body: OpenSessionBody):
        session = service.open_session(study_id, body.attributes)
        study = service.get_study(study_id)
        return {
            "session_id": session.session_id,
            "total_screens": study.total_screens,
        }

    @app.get("/sessions/{session_id}/screen")
    def next_screen(session_id: str):
        view = service.next_screen(session_id)
        if view is None:
            return {"completed": True}
        return {
            "screen_index": view.screen_index,
            "prompt": view.prompt,
            "options": list(view.options),
        }

    @app.post("/sessions/{session_id}/choices", status_code=204)
    def submit_choice(session_id: str, body: ChoiceBody):
        service.submit_choice(
            session_id,
            screen_index=body.screen_index,
            best=body.best,
            worst=body.worst,
        )
        return Response(status_code=204)

    @app.get("/studies/{study_id}/results")
    def results(
        study_id: str,
        lam: float = 0.001,
        bootstrap: int = 0,
        bootstrap_seed: int = 0,
        cohort: list[str] = Query(default=[]),
    ):
        cohorts = [_parse_cohort_param(c) for c in cohort]
        return service.results(
            study_id,
            options=FitOptions(l2_penalty=lam),
            cohorts=cohorts or None,
            bootstrap_replicates=bootstrap,
            bootstrap_seed=bootstrap_seed,
        )

    @app.get("/studies/{study_id}/export.csv")
    def export_csv(study_id: str):
        return PlainTextResponse(
            service.export_csv(study_id), media_type="text/csv; charset=utf-8"
        )

    return app


def _parse_cohort_param(text: str) -> CohortSpec:
    """Parse ``name:key=value;key=value`` into a CohortSpec."""
    name, sep, rest = text.partition(":")
    if not sep or not name:
        raise InvalidInputError(
            f"cohort parameter {text!r} must look like name:key=value[;key=value]"
        )
    required = {}
    for pair in rest.split(";"):
        if not pair:
            continue
        key, eq, value = pair.partition("=")
        if not eq:
            raise InvalidInputError(f"malformed cohort attribute {pair!r}")
        required[key] = value
    return CohortSpec(name=name, required_attributes=required)
