#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Opentelemetry instrumentation for pipeline stages.

Stages open spans through :func:`_span`, which does nothing until :func:`setup_tracing`
has installed a tracer. Finished spans are always kept in memory so a run can report
per-stage wall-clock timings; when an endpoint is configured they are also exported
over OTLP/HTTP.

Usage::

    setup_tracing("pme", endpoint=None)
    with _span("spread charges"):
        ...
    timings = stage_timings()
    shutdown_tracing()

Set ``PME_TRACING_ENABLED=0`` to keep :func:`setup_tracing` from installing anything.
"""

import logging
import os
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Any, Dict, Generator, Optional, cast

from opentelemetry.exporter.otlp.proto.http.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import Span, TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor, SimpleSpanProcessor
from opentelemetry.sdk.trace.export.in_memory_span_exporter import InMemorySpanExporter
from opentelemetry.trace import Tracer

logger = logging.getLogger(__name__)

tracer: ContextVar[Tracer] = ContextVar("tracer")
_provider: ContextVar[TracerProvider] = ContextVar("provider")
_memory: ContextVar[InMemorySpanExporter] = ContextVar("memory")

PME_TRACING_ENABLED = "PME_TRACING_ENABLED"


class TracingError(RuntimeError):
    """Base class for errors raised by this module."""


def is_enabled() -> bool:
    """Whether tracing is enabled."""
    return os.getenv(PME_TRACING_ENABLED, "1") == "1"


@contextmanager
def tracing_disabled():
    """Contextmanager to temporarily disable tracing.

    For usage in tests.
    """
    previous = os.getenv(PME_TRACING_ENABLED, "1")
    os.environ[PME_TRACING_ENABLED] = "0"
    try:
        yield
    finally:
        os.environ[PME_TRACING_ENABLED] = previous


def _get_tracer() -> Optional[Tracer]:
    return tracer.get(None)


@contextmanager
def _span(name: str) -> Generator[Optional[Span], Any, Any]:
    """Context to create a span if there is a tracer, otherwise do nothing."""
    if _tracer := _get_tracer():
        with _tracer.start_as_current_span(name) as span:
            yield cast(Span, span)
    else:
        yield None


def setup_tracing(service_name: str = "pme", endpoint: Optional[str] = None) -> bool:
    """Install a tracer for the current context.

    Returns:
        Whether a tracer was installed.

    Raises:
        TracingError: if the endpoint is not an http(s) URL.
    """
    if not is_enabled():
        logger.info("Tracing DISABLED: skipping tracer setup")
        return False
    if endpoint and not endpoint.startswith(("http://", "https://")):
        raise TracingError(f"tracing endpoint {endpoint!r} is not an http(s) URL")

    provider = TracerProvider(resource=Resource.create({"service.name": service_name}))
    memory = InMemorySpanExporter()
    provider.add_span_processor(SimpleSpanProcessor(memory))
    if endpoint:
        provider.add_span_processor(BatchSpanProcessor(OTLPSpanExporter(endpoint=endpoint)))
        logger.info("exporting traces to %s", endpoint)

    tracer.set(provider.get_tracer(service_name))
    _provider.set(provider)
    _memory.set(memory)
    return True


def stage_timings() -> Dict[str, float]:
    """Seconds spent per span name among spans finished so far."""
    memory = _memory.get(None)
    if memory is None:
        return {}
    timings: Dict[str, float] = {}
    for span in memory.get_finished_spans():
        if span.start_time is None or span.end_time is None:
            continue
        elapsed = (span.end_time - span.start_time) / 1e9
        timings[span.name] = timings.get(span.name, 0.0) + elapsed
    return timings


def shutdown_tracing() -> None:
    """Flush exporters and remove the tracer from the current context."""
    provider = _provider.get(None)
    if provider is None:
        return
    provider.force_flush(timeout_millis=1000)
    provider.shutdown()
    for var in (tracer, _provider, _memory):
        var.set(None)  # type: ignore
