"""Uniform client for chat-completion, embedding, and judge endpoints.

Two backends share one surface: `HttpGateway` speaks the common HTTP/JSON
chat-completion convention (per-token top-k log-probabilities included), and
`ScriptedGateway` is a deterministic stand-in for tests and desk-scale runs.
The mock replays a transcript of fingerprinted responses and can synthesize a
response for unknown requests as a pure function of the request bytes, so
identical request bytes always yield identical response bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import categories as cat


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    """Network/HTTP failure that survived the retry budget."""


class CapabilityError(GatewayError):
    """Endpoint cannot produce what was requested (e.g. token logprobs)."""


class JudgeParseError(GatewayError):
    def __init__(self, raw_reply: str):
        self.raw_reply = raw_reply
        super().__init__(f"judge reply not parseable: {raw_reply[:120]!r}")


@dataclass(frozen=True)
class Decode:
    mode: str = "greedy"  # "greedy" | "sampled"
    temperature: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.mode == "greedy" and self.temperature is not None:
            raise ValueError("greedy decoding takes no temperature")
        if self.mode not in ("greedy", "sampled"):
            raise ValueError(f"unknown decode mode {self.mode!r}")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    image_refs: tuple[str, ...] = ()
    decode: Decode = Decode()
    want_logprobs: bool = False
    top_k_logprobs: int = 0

    def __post_init__(self):
        if self.want_logprobs and self.top_k_logprobs < 2:
            raise ValueError("want_logprobs requires top_k_logprobs >= 2")

    def canonical(self) -> str:
        """Stable byte representation; the fingerprint input."""
        return json.dumps({
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "image_refs": list(self.image_refs),
            "decode": {"mode": self.decode.mode, "temperature": self.decode.temperature,
                       "seed": self.decode.seed},
            "want_logprobs": self.want_logprobs,
            "top_k_logprobs": self.top_k_logprobs,
        }, sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TokenLogprobs:
    position: int
    entries: dict  # token string -> log-probability or raw logit

    def __post_init__(self):
        if not self.entries:
            raise ValueError("logprob entries must be non-empty")


@dataclass(frozen=True)
class ChatResult:
    text: str
    logprobs: tuple[TokenLogprobs, ...] | None = None


@dataclass(frozen=True)
class JudgeScore:
    alpha: int  # completeness, 0..2
    rho: int    # preciseness, 0..2
    kappa: int  # relevance, 0..2

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("rho", self.rho), ("kappa", self.kappa)):
            if v not in (0, 1, 2):
                raise ValueError(f"{name} must be 0, 1 or 2, got {v}")


@dataclass(frozen=True)
class GatewayProfile:
    name: str = "default"
    base_url: str = ""
    api_key: str = ""
    model: str = ""
    rpm: int = 60
    max_concurrent: int = 5

    @classmethod
    def from_env(cls, name: str | None = None, env: dict | None = None) -> "GatewayProfile":
        """GATEWAY_BASE_URL etc.; named profiles use GATEWAY_<NAME>_BASE_URL."""
        env = env if env is not None else os.environ
        prefix = "GATEWAY_" if not name else f"GATEWAY_{name.upper().replace('-', '_')}_"

        def get(key, default=""):
            return env.get(prefix + key, env.get("GATEWAY_" + key, default))

        return cls(name=name or "default",
                   base_url=get("BASE_URL"), api_key=get("API_KEY"), model=get("MODEL"),
                   rpm=int(get("RPM", "60")), max_concurrent=int(get("MAX_CONCURRENT", "5")))


class RateLimiter:
    """Token bucket: `rpm` requests per minute, bucket capacity `burst`."""

    def __init__(self, rpm: int, burst: int | None = None, clock=time.monotonic, sleep=time.sleep):
        self.rpm = max(1, rpm)
        self.capacity = burst if burst is not None else self.rpm
        self._tokens = float(self.capacity)
        self._updated = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rpm / 60.0)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) * 60.0 / self.rpm
            self._sleep(wait)


def with_retries(fn, budget: int = 4, base_delay: float = 0.5, sleep=time.sleep):
    """Call `fn` with up to `budget` attempts and exponential (non-decreasing)
    backoff on TransportError. Returns (result, attempts)."""
    last: TransportError | None = None
    for attempt in range(1, budget + 1):
        try:
            return fn(), attempt
        except TransportError as exc:
            last = exc
            if attempt < budget:
                sleep(base_delay * (2 ** (attempt - 1)))
    raise TransportError(f"gave up after {budget} attempts: {last}") from last


JUDGE_PATTERN = re.compile(
    r"alpha\s*=\s*([0-2])(?!\d).*?rho\s*=\s*([0-2])(?!\d).*?kappa\s*=\s*([0-2])(?!\d)",
    re.IGNORECASE | re.DOTALL)

JUDGE_REPROMPT = ("Your previous reply could not be parsed. Reply with exactly one line "
                  "of the form: alpha=<0|1|2> rho=<0|1|2> kappa=<0|1|2>")


def load_judge_rubric() -> str:
    from importlib import resources
    return resources.files("tracekit.data").joinpath("templates/judge_rubric_v1.txt").read_text("utf-8")


class Gateway:
    """Shared behavior: judge prompting/parsing and metrics counters.

    Subclasses implement chat() and embed(). No shared state is mutated by
    operations other than the counters.
    """

    model_tag = "unknown"

    def __init__(self):
        self.counters: dict[str, int] = {"chat": 0, "embed": 0, "judge": 0, "attempts": 0}

    def chat(self, req: ChatRequest) -> ChatResult:
        raise NotImplementedError

    def embed(self, text: str) -> list[float]:
        raise NotImplementedError

    def judge(self, response: str, reference: str, rubric_template: str | None = None) -> JudgeScore:
        """Score `response` against `reference`; one reprompt on a bad reply,
        then a typed failure carrying the raw reply."""
        self.counters["judge"] += 1
        rubric = rubric_template if rubric_template is not None else load_judge_rubric()
        prompt = rubric.format(response=response, reference=reference)
        messages = [ChatMessage("user", prompt)]
        reply = self.chat(ChatRequest(messages=tuple(messages))).text
        m = JUDGE_PATTERN.search(reply)
        if not m:
            messages += [ChatMessage("assistant", reply), ChatMessage("user", JUDGE_REPROMPT)]
            reply = self.chat(ChatRequest(messages=tuple(messages))).text
            m = JUDGE_PATTERN.search(reply)
            if not m:
                raise JudgeParseError(reply)
        return JudgeScore(alpha=int(m.group(1)), rho=int(m.group(2)), kappa=int(m.group(3)))


class HttpGateway(Gateway):
    """HTTP/JSON chat-completion client with bounded retries and a token bucket.

    `transport` is injectable for tests: a callable (path, payload) -> dict.
    """

    def __init__(self, profile: GatewayProfile, transport=None, retry_budget: int = 4,
                 base_delay: float = 0.5, sleep=time.sleep):
        super().__init__()
        self.profile = profile
        self.model_tag = profile.model or profile.name
        self.retry_budget = retry_budget
        self.base_delay = base_delay
        self._sleep = sleep
        self._limiter = RateLimiter(profile.rpm, sleep=sleep)
        self._slots = threading.BoundedSemaphore(profile.max_concurrent)
        self._transport = transport if transport is not None else self._http_post
        self.last_attempts = 0

    def _http_post(self, path: str, payload: dict) -> dict:
        import httpx
        url = self.profile.base_url.rstrip("/") + path
        headers = {"Authorization": f"Bearer {self.profile.api_key}"} if self.profile.api_key else {}
        try:
            resp = httpx.post(url, json=payload, headers=headers, timeout=60.0)
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (429,) or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def _call(self, path: str, payload: dict) -> dict:
        def attempt():
            self._limiter.acquire()
            self.counters["attempts"] += 1
            return self._transport(path, payload)

        with self._slots:
            result, attempts = with_retries(attempt, self.retry_budget, self.base_delay, self._sleep)
        self.last_attempts = attempts
        return result

    def chat(self, req: ChatRequest) -> ChatResult:
        self.counters["chat"] += 1
        payload = {
            "model": self.profile.model,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": 0.0 if req.decode.mode == "greedy" else req.decode.temperature,
        }
        if req.image_refs:
            payload["image_refs"] = list(req.image_refs)
        if req.decode.seed is not None:
            payload["seed"] = req.decode.seed
        if req.want_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = req.top_k_logprobs
        data = self._call("/chat/completions", payload)
        choice = data["choices"][0]
        text = choice["message"]["content"]
        logprobs = None
        if req.want_logprobs:
            content = (choice.get("logprobs") or {}).get("content")
            if not content:
                raise CapabilityError(f"endpoint {self.profile.name} returned no logprobs")
            logprobs = tuple(
                TokenLogprobs(position=i,
                              entries={t["token"]: t["logprob"] for t in step["top_logprobs"]})
                for i, step in enumerate(content))
        return ChatResult(text=text, logprobs=logprobs)

    def embed(self, text: str) -> list[float]:
        if not text:
            raise GatewayError("embed requires non-empty text")
        self.counters["embed"] += 1
        data = self._call("/embeddings", {"model": self.profile.model, "input": text})
        return list(data["data"][0]["embedding"])


# --- deterministic scripted mock ---

GENERIC_LOCATIONS = (
    "the upper left corner", "the center of the frame", "the lower edge",
    "the background", "the main subject", "the right-hand side",
    "the foreground", "the area around the focal point",
)

MCQ_DISTRACTOR_POOL = (
    "The image metadata explicitly states the camera model used.",
    "A visible watermark identifies the original photographer.",
    "The file extension proves the image came from a scanner.",
    "The color profile matches a standard print catalogue.",
    "A timestamp overlay confirms the capture date.",
    "The depicted scene appears in a well-known stock photo archive.",
    "Compression artifacts show the image was sent through a fax machine.",
)

FAKE_CONCLUSIONS = (
    "Thus, I tend to believe this is a fake image produced by a generative model.",
    "Taken together, these cues indicate the image is fake and AI-generated.",
    "Overall, the evidence points to a synthetic, AI-generated picture, so I judge it fake.",
)

REAL_CONCLUSIONS = (
    "Thus, the image appears to be a real photograph with no generative artifacts.",
    "Taken together, these observations support a genuine, real capture.",
    "Overall, everything is consistent with an authentic, real photograph.",
)


class ScriptedGateway(Gateway):
    """Transcript-replaying mock; optional procedural synthesis for unknown
    fingerprints. All output is a pure function of (request bytes, seed)."""

    def __init__(self, transcript: dict | None = None, seed: int = 0,
                 synthesize: bool = True, model_tag: str = "mock-v1", embed_dim: int = 32):
        super().__init__()
        self.transcript = dict(transcript or {})
        self.seed = seed
        self.synthesize = synthesize
        self.model_tag = model_tag
        self.embed_dim = embed_dim

    @classmethod
    def from_transcript_file(cls, path: str | Path, **kwargs) -> "ScriptedGateway":
        transcript = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    entry = json.loads(line)
                    transcript[entry["fingerprint"]] = entry["response"]
        return cls(transcript=transcript, **kwargs)

    def chat(self, req: ChatRequest) -> ChatResult:
        self.counters["chat"] += 1
        self.counters["attempts"] += 1
        entry = self.transcript.get(req.fingerprint())
        if entry is not None:
            logprobs = None
            if entry.get("logprobs"):
                logprobs = tuple(TokenLogprobs(position=lp["position"], entries=dict(lp["entries"]))
                                 for lp in entry["logprobs"])
            if req.want_logprobs and logprobs is None:
                raise CapabilityError("transcript entry has no logprobs")
            return ChatResult(text=entry.get("text", ""), logprobs=logprobs)
        if not self.synthesize:
            raise GatewayError(f"no transcript entry for fingerprint {req.fingerprint()[:12]}")
        return self._synthesize(req)

    def embed(self, text: str) -> list[float]:
        if not text:
            raise GatewayError("embed requires non-empty text")
        self.counters["embed"] += 1
        digest = hashlib.sha256(f"embed:{self.seed}:{text}".encode("utf-8")).digest()
        raw = [(digest[i % len(digest)] - 127.5) / 127.5 for i in range(self.embed_dim)]
        norm = math.sqrt(sum(v * v for v in raw))
        return [v / norm for v in raw]

    # synthesis -----------------------------------------------------------

    def _rng(self, req: ChatRequest) -> random.Random:
        return random.Random(hashlib.sha256(f"{self.seed}:{req.canonical()}".encode("utf-8")).hexdigest())

    def _synthesize(self, req: ChatRequest) -> ChatResult:
        rng = self._rng(req)
        last_user = next((m.content for m in reversed(req.messages) if m.role == "user"), "")
        if req.want_logprobs and req.messages and req.messages[-1].role == "assistant":
            return self._auth_token_table(req, rng)
        task = self._task_of(req)
        if task == "reasoning":
            return ChatResult(text=self._reasoning_text(last_user, rng))
        if task == "rewrite":
            return ChatResult(text=self._rewrite_json(last_user, rng))
        if task == "probe":
            return ChatResult(text=self._probe_answer(last_user, rng))
        if task == "equiv":
            return ChatResult(text=self._equiv_answer(last_user))
        if task == "judge":
            return ChatResult(text=f"alpha={rng.randint(0, 2)} rho={rng.randint(0, 2)} kappa={rng.randint(0, 2)}")
        if "authenticity" in last_user.lower():
            label = self._label_for_refs(req, rng)
            return ChatResult(text=f"This image is {label}.")
        return ChatResult(text=f"Acknowledged ({rng.randrange(10**6):06d}).")

    @staticmethod
    def _task_of(req: ChatRequest) -> str | None:
        for m in req.messages:
            match = re.match(r"#task:\s*([a-z_-]+)", m.content)
            if match:
                return match.group(1)
        return None

    def _label_for_refs(self, req: ChatRequest, rng: random.Random) -> str:
        blob = " ".join(req.image_refs).lower()
        if "fake" in blob:
            return "fake"
        if "real" in blob:
            return "real"
        return rng.choice(["fake", "real"])

    def _auth_token_table(self, req: ChatRequest, rng: random.Random) -> ChatResult:
        """Top-k logit table at the auth-token position. Image refs whose path
        mentions fake/real get a matching bias so desk-scale detection runs are
        non-degenerate."""
        label = self._label_for_refs(req, rng)
        bias = 3.0 + rng.random() * 2.0
        entries = {}
        for tok in ("fake", "Fake", "FAKE"):
            entries[tok] = rng.uniform(-4.0, 0.0) + (bias if label == "fake" else 0.0)
        for tok in ("real", "Real", "REAL"):
            entries[tok] = rng.uniform(-4.0, 0.0) + (bias if label == "real" else 0.0)
        for tok in ("the", "an", "not", "likely", "probably", "clearly"):
            entries[tok] = rng.uniform(-9.0, -4.5)
        top = dict(sorted(entries.items(), key=lambda kv: -kv[1])[: req.top_k_logprobs])
        text = max((k for k in top if k.lower() in ("fake", "real")), key=lambda k: top[k], default="fake")
        return ChatResult(text=f"This image is {text.lower()}.",
                          logprobs=(TokenLogprobs(position=0, entries=top),))

    def _reasoning_text(self, prompt: str, rng: random.Random) -> str:
        cats = re.search(r"Steering categories:\s*(.+)", prompt)
        auth = re.search(r"Authenticity label:\s*(\w+)", prompt)
        selected = [c.strip() for c in cats.group(1).split(",")] if cats else ["texture"]
        label = auth.group(1).strip().lower() if auth else "fake"
        lex = cat.lexicon()
        sentences = []
        for c in selected:
            kw = lex.get(c, (c,))[0]
            where = rng.choice(GENERIC_LOCATIONS)
            if label == "fake":
                sentences.append(f"Looking at {c}, the {kw} near {where} looks inconsistent with a natural capture.")
            else:
                sentences.append(f"Looking at {c}, the {kw} near {where} behaves exactly as expected in a photograph.")
        conclusion = rng.choice(FAKE_CONCLUSIONS if label == "fake" else REAL_CONCLUSIONS)
        return " ".join(sentences + [conclusion])

    def _rewrite_json(self, prompt: str, rng: random.Random) -> str:
        qtype = (re.search(r"type=(\S+)", prompt) or [None, "what"])[1]
        fmt = (re.search(r"format=(\S+)", prompt) or [None, "narrative"])[1]
        src = prompt.split("Source reasoning:", 1)[-1].strip()
        sents = [s.strip() for s in re.split(r"(?<=[.!?])\s+", src) if s.strip()] or ["No detail available."]
        body = sents[rng.randrange(len(sents))] if len(sents) == 1 else sents[rng.randrange(len(sents) - 1)]
        questions = {
            "what": ["What visual irregularity stands out in this image?",
                     "What detail hints at this image's origin?",
                     "What trace evidence does this image carry?"],
            "how": ["How can the authenticity of this image be judged from its details?",
                    "How do the visual cues here reveal the image's origin?"],
            "yes-or-no": ["Does this image show signs of synthetic generation?",
                          "Is there visible trace evidence of AI generation in this image?"],
            "imperative": ["Point out the regions that reveal this image's authenticity.",
                           "Describe the cues that settle whether this image is genuine."],
        }
        question = rng.choice(questions.get(qtype, questions["what"]))
        if fmt == "mcq":
            distractors = rng.sample([d for d in MCQ_DISTRACTOR_POOL if d != body], 3)
            options = distractors + [body]
            rng.shuffle(options)
            return json.dumps({"question": question, "options": options,
                               "correct_index": options.index(body)}, ensure_ascii=False)
        if fmt == "yes_no":
            concluded_fake = any(t in src.lower() for t in ("fake", "synthetic", "ai-generated", "generative"))
            answer = ("Yes. " if concluded_fake else "No. ") + body
            return json.dumps({"question": question, "answer": answer}, ensure_ascii=False)
        return json.dumps({"question": question, "answer": body}, ensure_ascii=False)

    def _probe_answer(self, prompt: str, rng: random.Random) -> str:
        if "Options:" in prompt:
            n = len(re.findall(r"^\s*\d+\)", prompt, re.MULTILINE)) or 4
            return f"ANSWER: {rng.randrange(n)}"
        if "yes or no" in prompt.lower():
            return rng.choice(["yes", "no"])
        return "I cannot determine this without seeing the image."

    @staticmethod
    def _equiv_answer(prompt: str) -> str:
        m = re.search(r"Candidate:\s*(.*?)\s*Reference:\s*(.*)", prompt, re.DOTALL)
        if not m:
            return "no"
        a = re.sub(r"\W+", " ", m.group(1).lower()).strip()
        b = re.sub(r"\W+", " ", m.group(2).lower()).strip()
        return "yes" if a and (a in b or b in a) else "no"
