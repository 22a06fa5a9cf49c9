"""Oracle backed by a text-generation HTTP endpoint.

Wire contract (field names remappable through ``request_template``)::

    POST {base_url}/generate
    {"model": ..., "prompt": ..., "max_tokens": ..., "temperature": ..., "logprobs": true?}
    -> {"text": "...", "token_scores": {"A": -0.1, "B": -2.3}?}

``token_scores`` is only read when the config declares ``logit_access``.
For pointwise scoring it holds ``{"yes": lp, "no": lp}`` (yes/no prompt) or
the per-token log-probabilities of the query continuation (QLM prompt).
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

import requests

from ..errors import ConfigError, MalformedResponse, TransportError, UnsupportedCapability
from ..oracle import RANK_SET, SCORE_ONE, SELECT_BEST, Oracle, OracleRequest, OracleVerdict
from ..prompts import LABELS, render_prompt, template_for
from .parsing import parse_listwise_order, parse_select_best

logger = logging.getLogger(__name__)

DEFAULT_WIRE_FIELDS = {
    "model": "model",
    "prompt": "prompt",
    "max_tokens": "max_tokens",
    "temperature": "temperature",
    "logprobs": "logprobs",
    "continuation": "continuation",
    "text": "text",
    "token_scores": "token_scores",
}
RETRY_STATUS = frozenset({408, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str = "default"
    timeout: float = 60.0
    max_retries: int = 2
    request_template: Mapping[str, str] = field(default_factory=dict)
    logit_access: bool = False
    max_tokens: int = 128
    temperature: float = 0.0
    backoff: float = 0.5
    token_env: str = "SETWISE_RERANK_API_TOKEN"
    pointwise_template: str = "pointwise_yesno"

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigError("endpoint base_url is required")
        if not self.timeout > 0:
            raise ConfigError("endpoint timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0 (0 means greedy decoding)")
        unknown = set(self.request_template) - set(DEFAULT_WIRE_FIELDS)
        if unknown:
            raise ConfigError(f"unknown request_template field(s): {', '.join(sorted(unknown))}")
        if self.pointwise_template not in ("pointwise_yesno", "pointwise_qlm"):
            raise ConfigError("pointwise_template must be pointwise_yesno or pointwise_qlm")

    def wire(self, name: str) -> str:
        return self.request_template.get(name, DEFAULT_WIRE_FIELDS[name])


def _post(cfg: EndpointConfig, body: dict[str, Any], session: requests.Session | None) -> dict[str, Any]:
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(cfg.token_env)
    if token:
        headers["Authorization"] = f"Bearer {token}"
    url = cfg.base_url.rstrip("/") + "/generate"
    post = session.post if session is not None else requests.post
    try:
        resp = post(url, json=body, headers=headers, timeout=cfg.timeout)
    except requests.RequestException as exc:
        raise TransportError(f"{type(exc).__name__} contacting {url}") from exc
    if resp.status_code in RETRY_STATUS:
        raise TransportError(f"HTTP {resp.status_code} from {url}")
    if resp.status_code >= 400:
        raise TransportError(f"HTTP {resp.status_code} from {url} (not retried)")
    try:
        payload = resp.json()
    except ValueError:
        raise MalformedResponse(resp.text, "response is not JSON") from None
    if not isinstance(payload, dict):
        raise MalformedResponse(resp.text, "response is not a JSON object")
    return payload


def _label_weights(scores: Any, arity: int) -> tuple[float, ...] | None:
    if not isinstance(scores, Mapping):
        return None
    norm = {str(k).strip().upper(): v for k, v in scores.items()}
    try:
        out = tuple(float(norm[LABELS[i]]) for i in range(arity))
    except (KeyError, TypeError, ValueError):
        return None
    return out if all(math.isfinite(w) for w in out) else None


def _interpret(req: OracleRequest, cfg: EndpointConfig, payload: Mapping[str, Any]) -> OracleVerdict:
    text = payload.get(cfg.wire("text"))
    if not isinstance(text, str):
        raise MalformedResponse(str(payload), "missing text field")
    scores = payload.get(cfg.wire("token_scores")) if cfg.logit_access else None
    cost = len(text.split())
    n = req.arity

    if req.kind == SCORE_ONE:
        if cfg.pointwise_template == "pointwise_yesno":
            if not isinstance(scores, Mapping):
                raise MalformedResponse(text, "pointwise scoring needs yes/no token scores")
            norm = {str(k).strip().lower(): v for k, v in scores.items()}
            try:
                yes, no = float(norm["yes"]), float(norm["no"])
            except (KeyError, TypeError, ValueError):
                raise MalformedResponse(str(scores), "missing yes/no token scores") from None
            m = max(yes, no)
            score = math.exp(yes - m) / (math.exp(yes - m) + math.exp(no - m))
        else:
            vals = list(scores.values()) if isinstance(scores, Mapping) else scores
            try:
                score = float(sum(float(v) for v in vals))
            except (TypeError, ValueError):
                raise MalformedResponse(str(scores), "bad query log-probabilities") from None
        if not math.isfinite(score):
            raise MalformedResponse(str(scores), "non-finite score")
        return OracleVerdict(score=score, output_token_cost=cost)

    weights = _label_weights(scores, n)
    if req.kind == SELECT_BEST:
        if weights is not None:
            winner = max(range(n), key=lambda i: (weights[i], -i))
        else:
            winner = parse_select_best(text, n)
        return OracleVerdict(winner=winner, weights=weights, output_token_cost=cost)

    if weights is not None:
        order = sorted(range(n), key=lambda i: -weights[i])
    else:
        order = parse_listwise_order(text, n)
    return OracleVerdict(winner=order[0], ordering=tuple(order), weights=weights, output_token_cost=cost)


def build_prompt(req: OracleRequest, cfg: EndpointConfig) -> str:
    if req.kind == RANK_SET and cfg.logit_access:
        # sort compare: one setwise prompt, ordering read off the label logits
        name = "setwise_prior" if req.prior_ordered else "setwise_plain"
    else:
        name = template_for(req.kind, req.arity, req.prior_ordered, cfg.pointwise_template).name
    return render_prompt(name, req.query, req.docs)


def endpoint_invoke(
    req: OracleRequest,
    cfg: EndpointConfig,
    session: requests.Session | None = None,
    sleep=time.sleep,
) -> OracleVerdict:
    """Render, send with retry/backoff, and parse one oracle request.

    Server errors (5xx, 408, 429), connection failures and unparseable
    answers are retried up to ``cfg.max_retries`` times with exponential
    backoff; the last error is raised once retries run out.
    """
    if req.kind == SCORE_ONE and not cfg.logit_access:
        raise UnsupportedCapability(SCORE_ONE, "pointwise scoring needs logit access")
    body: dict[str, Any] = {
        cfg.wire("model"): cfg.model_name,
        cfg.wire("prompt"): build_prompt(req, cfg),
        cfg.wire("max_tokens"): cfg.max_tokens,
        cfg.wire("temperature"): cfg.temperature,
    }
    if cfg.logit_access:
        body[cfg.wire("logprobs")] = True
    if req.kind == SCORE_ONE and cfg.pointwise_template == "pointwise_qlm":
        body[cfg.wire("continuation")] = req.query.text

    last: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        if attempt:
            sleep(cfg.backoff * 2 ** (attempt - 1))
        try:
            payload = _post(cfg, body, session)
            return _interpret(req, cfg, payload).check(req.arity)
        except TransportError as exc:
            if "(not retried)" in str(exc):
                raise
            last = exc
        except MalformedResponse as exc:
            last = exc
        logger.debug("attempt %d/%d failed: %s", attempt + 1, cfg.max_retries + 1, last)
    assert last is not None
    raise last


class EndpointOracle(Oracle):
    """Oracle that asks a hosted model.

    ``rank_set`` always works (listwise identifiers, or label logits when
    available); weights and ``score_one`` require ``logit_access``.  With
    ``fallback_on_malformed`` an unparseable answer becomes "position 0 wins"
    instead of an error.
    """

    def __init__(self, cfg: EndpointConfig, fallback_on_malformed: bool = True):
        self.cfg = cfg
        self.fallback_on_malformed = fallback_on_malformed
        kinds = {SELECT_BEST, RANK_SET}
        if cfg.logit_access:
            kinds.add(SCORE_ONE)
        self.capabilities = frozenset(kinds)
        self.provides_weights = cfg.logit_access
        self.malformed = 0
        self._session = requests.Session()

    def invoke(self, req: OracleRequest) -> OracleVerdict:
        self.require(req.kind)
        try:
            return endpoint_invoke(req, self.cfg, self._session)
        except MalformedResponse:
            if not self.fallback_on_malformed or req.kind == SCORE_ONE:
                raise
            self.malformed += 1
            logger.warning("unparseable answer for query %s; keeping position 0", req.query.query_id)
            if req.kind == SELECT_BEST:
                return OracleVerdict(winner=0)
            return OracleVerdict(winner=0, ordering=tuple(range(req.arity)))

    def close(self) -> None:
        self._session.close()
