"""Output formatting utilities."""

import json
from typing import Any, Dict, List, Optional

import numpy as np


class OutputFormatter:
    """Format experiment results for display and export."""

    @staticmethod
    def format_auc(auc: float, std: Optional[float] = None) -> str:
        """Format AUC value, optionally with its spread over runs."""
        if std is None:
            return f"{auc:.4f}"
        return f"{auc:.4f} ± {std:.4f}"

    @staticmethod
    def format_count(n: int) -> str:
        """Format a parameter count with thousands separators."""
        return f"{int(n):,}"

    @staticmethod
    def format_ratio(value: float) -> str:
        return f"{value * 100:.1f}%"

    @staticmethod
    def format_param_row(row: Dict[str, Any]) -> str:
        """Format one per-field accounting row for table display."""
        name = str(row["field"])[:18]
        return (
            f"{name:18s} │ {row['kind']:11s} │ {row['method']:11s} │ {row['dim']:>5d} │ "
            f"{OutputFormatter.format_count(row['params']):>12s} │ "
            f"{OutputFormatter.format_count(row['network']):>10s} │ "
            f"{OutputFormatter.format_count(row['extras']):>7s}"
        )

    @staticmethod
    def format_report_summary(report: Dict[str, Any]) -> str:
        """Format a training report for text output."""
        params = report["params"]
        lines: List[str] = [
            "=" * 70,
            "TRAINING REPORT",
            "=" * 70,
            "",
            f"  Seeds: {', '.join(str(s) for s in report['seeds'])}",
            f"  Test AUC: {OutputFormatter.format_auc(report['test_auc_mean'], report['test_auc_std'])}",
            f"  Test logloss: {report['test_logloss_mean']:.4f}",
            f"  Best validation seed: {report['best_seed']}",
            "",
            "Parameters:",
            "-" * 70,
            f"  Numerical embeddings:   {OutputFormatter.format_count(params['numerical'])}",
            f"  Categorical embeddings: {OutputFormatter.format_count(params['categorical'])}",
            f"  Itemized extras:        {OutputFormatter.format_count(params['extras'])}",
            f"  Backbone:               {OutputFormatter.format_count(params['backbone'])}",
            f"  Total:                  {OutputFormatter.format_count(params['total'])}",
        ]
        for name, stats in report.get("cache", {}).items():
            lines.append(
                f"  Cache '{name}': {stats['hits']} hits, {stats['misses']} misses, "
                f"max |diff| {stats['max_abs_diff']:.2e}"
            )
        lines.append("=" * 70)
        return "\n".join(lines)

    @staticmethod
    def to_native(obj: Any) -> Any:
        """Convert numpy scalars and arrays to Python types for JSON serialization."""
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, dict):
            return {k: OutputFormatter.to_native(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [OutputFormatter.to_native(item) for item in obj]
        return obj

    @staticmethod
    def to_json(data: Dict[str, Any], pretty: bool = True) -> str:
        """Convert data to JSON string (full float precision)."""
        data = OutputFormatter.to_native(data)
        if pretty:
            return json.dumps(data, indent=2, sort_keys=True)
        return json.dumps(data, sort_keys=True)
