"""Sequence codec: GOP structure, layered container, partial decoding, rate reports."""
from .container import (
    INTER,
    INTRA,
    LAMBDA_MENU,
    Chunk,
    Container,
    FrameRecord,
    SequenceHeader,
    drop_chunks,
    lambda_index,
    truncate_container,
)
from .loss import LossModel, simulate_loss
from .pipeline import DecodeOptions, DecodeResult, EncodeResult, decode_sequence, encode_sequence
from .stats import CodingStats, DecodeStats, EncodeStats, FrameStat, ScaleStat, format_report, rate_report

__all__ = [
    "INTER", "INTRA", "LAMBDA_MENU", "Chunk", "Container", "FrameRecord", "SequenceHeader", "drop_chunks",
    "lambda_index", "truncate_container", "LossModel", "simulate_loss", "DecodeOptions", "DecodeResult",
    "EncodeResult", "decode_sequence", "encode_sequence", "CodingStats", "DecodeStats", "EncodeStats",
    "FrameStat", "ScaleStat", "format_report", "rate_report",
]
