"""Outbound notifications and the mailbox ingestion path.

Two transports: a file outbox (one JSON line per notification, the default
everywhere) and SMTP driven by environment variables (optional, never needed
by tests). Inbound task requests arrive as plain-text files in a watched
directory: first line is the task kind, the rest are key=value parameters.
"""

from __future__ import annotations

import json
import logging
import os
import smtplib
from dataclasses import dataclass
from email.message import EmailMessage
from pathlib import Path
from typing import Callable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Notification:
    to: str
    subject: str
    body: str
    related_task: int


class FileTransport:
    """Appends one JSON line per notification to an outbox file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def send(self, n: Notification) -> None:
        line = json.dumps(
            {"to": n.to, "subject": n.subject, "body": n.body,
             "task": n.related_task},
            sort_keys=True, separators=(",", ":"))
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


class SmtpTransport:
    """SMTP delivery configured from SMTP_HOST/PORT/USER/PASS."""

    def __init__(self, sender: str = "robot@localhost"):
        self.host = os.environ.get("SMTP_HOST", "localhost")
        self.port = int(os.environ.get("SMTP_PORT", "25"))
        self.user = os.environ.get("SMTP_USER")
        self.password = os.environ.get("SMTP_PASS")
        self.sender = sender

    def send(self, n: Notification) -> None:
        msg = EmailMessage()
        msg["From"] = self.sender
        msg["To"] = n.to
        msg["Subject"] = n.subject
        msg.set_content(n.body)
        with smtplib.SMTP(self.host, self.port, timeout=10) as smtp:
            if self.user and self.password:
                smtp.starttls()
                smtp.login(self.user, self.password)
            smtp.send_message(msg)


class Notifier:
    """Wraps a transport with retry-once semantics.

    A delivery that fails twice is dropped; `on_drop` (if set) receives a
    short description so the caller can put a record in its event log.
    """

    def __init__(self, transport=None,
                 on_drop: Callable[[str], None] | None = None):
        self.transport = transport
        self.on_drop = on_drop
        self.sent = 0

    def notify(self, n: Notification) -> bool:
        if self.transport is None:
            return False
        for attempt in (1, 2):
            try:
                self.transport.send(n)
                self.sent += 1
                return True
            except Exception as exc:  # noqa: BLE001 - transport errors vary
                log.warning("notification attempt %d failed: %s", attempt, exc)
                err = exc
        if self.on_drop is not None:
            self.on_drop(f"notification to {n.to} dropped: {err}")
        return False


# ------------------------------------------------------------------ mailbox

def _parse_point(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def parse_request_file(text: str) -> dict:
    """Parse a mailbox message into a task-request dict.

    Format: first non-empty line is the kind, remaining lines key=value.
    Raises ValueError with a human-readable reason on any problem.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty message")
    kind = lines[0]
    fields: dict[str, str] = {}
    for ln in lines[1:]:
        if "=" not in ln:
            raise ValueError(f"malformed parameter line {ln!r}")
        key, _, value = ln.partition("=")
        fields[key.strip()] = value.strip()

    params: dict = {}
    if kind == "target_search":
        if "marker" not in fields:
            raise ValueError("target_search needs marker=<id>")
        params["marker"] = int(fields["marker"])
        if "locations" in fields:
            params["locations"] = [
                list(_parse_point(p))
                for p in fields["locations"].split(";") if p]
    elif kind == "delivery":
        for key in ("pickup", "dropoff"):
            if key not in fields:
                raise ValueError(f"delivery needs {key}=x,y")
            params[key] = list(_parse_point(fields[key]))
    else:
        raise ValueError(f"unknown task kind {kind!r}")

    req = {"kind": kind, "params": params}
    if "reply_to" in fields:
        req["reply_to"] = fields["reply_to"]
    return req


def poll_mailbox(directory: str | Path,
                 schedule: Callable[[dict], int]) -> list[int]:
    """Ingest message files from `directory`.

    Every regular file is parsed and handed to `schedule(request) -> id`;
    successes move to processed/, failures to rejected/ next to a .reason
    file. Returns the ids of the tasks scheduled, in filename order.
    """
    directory = Path(directory)
    processed = directory / "processed"
    rejected = directory / "rejected"
    scheduled: list[int] = []
    for path in sorted(directory.iterdir()):
        if not path.is_file():
            continue
        try:
            req = parse_request_file(path.read_text(encoding="utf-8"))
            scheduled.append(schedule(req))
        except Exception as exc:  # noqa: BLE001 - reject, never crash the loop
            rejected.mkdir(exist_ok=True)
            target = rejected / path.name
            path.rename(target)
            (rejected / (path.name + ".reason")).write_text(
                str(exc) + "\n", encoding="utf-8")
            continue
        processed.mkdir(exist_ok=True)
        path.rename(processed / path.name)
    return scheduled
