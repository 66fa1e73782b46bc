"""Run configuration: defaults, key-value config files, flag overrides and method assignment."""

import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from tabembed.core.data_loader import FeatureSchema
from tabembed.core.embed_cat import CategoricalMethod
from tabembed.core.embed_num import NumericalMethod
from tabembed.core.model import ModelConfig
from tabembed.utils.constants import (
    DEFAULT_BACKBONE_HIDDEN,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CAT_LAYERS,
    DEFAULT_DISCRETIZE_BUCKETS,
    DEFAULT_EMBED_DIM,
    DEFAULT_EXU_CAP,
    DEFAULT_HASH_FUNCTIONS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MASTER_SEED,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_N_SEEDS,
    DEFAULT_NUM_LAYERS,
    DEFAULT_NUM_WIDTH,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_PATIENCE,
    DEFAULT_SYNTH_ROWS,
    DEFAULT_SYNTH_VOCAB,
    DEFAULT_TEMPERATURE,
    SEED_ENV_VAR,
)
from tabembed.utils.errors import ConfigurationError
from tabembed.utils.validators import ConfigValidator

logger = logging.getLogger(__name__)

NUMERICAL_METHODS = tuple(m.value for m in NumericalMethod)
CATEGORICAL_METHODS = tuple(m.value for m in CategoricalMethod)

# keys that are not written to reports (paths differ between otherwise identical runs)
_LOCAL_KEYS = ("out",)


@dataclass
class RunConfig:
    """Everything needed to reproduce one experiment."""

    data: Optional[str] = None
    schema: Optional[str] = None
    synth: Optional[str] = None
    n: int = DEFAULT_SYNTH_ROWS
    v: int = DEFAULT_SYNTH_VOCAB
    default_method: Optional[str] = None
    methods: Dict[str, str] = field(default_factory=dict)
    d: int = DEFAULT_EMBED_DIM
    d_hat: Optional[int] = None
    layers: int = DEFAULT_NUM_LAYERS
    width: int = DEFAULT_NUM_WIDTH
    cap: float = DEFAULT_EXU_CAP
    buckets: int = DEFAULT_DISCRETIZE_BUCKETS
    temperature: float = DEFAULT_TEMPERATURE
    cat_layers: int = DEFAULT_CAT_LAYERS
    cat_width: Optional[int] = None
    hash_functions: int = DEFAULT_HASH_FUNCTIONS
    hash_buckets: Optional[int] = None
    backbone_hidden: Tuple[int, ...] = DEFAULT_BACKBONE_HIDDEN
    lr: float = DEFAULT_LEARNING_RATE
    batch: int = DEFAULT_BATCH_SIZE
    patience: int = DEFAULT_PATIENCE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    seeds: int = DEFAULT_N_SEEDS
    seed: int = DEFAULT_MASTER_SEED
    out: str = DEFAULT_OUTPUT_DIR

    # -- construction ------------------------------------------------------

    @classmethod
    def resolve(
        cls,
        overrides: Optional[Mapping[str, Any]] = None,
        config_file: Optional[Union[str, Path]] = None,
        environ: Optional[Mapping[str, str]] = None,
    ) -> "RunConfig":
        """
        Build a configuration from defaults, an optional config file and flag overrides.

        Precedence is defaults < config file < overrides. When no seed is set by
        either, the ``DTE_SEED`` environment variable is used if present.

        Args:
            overrides: Flag values; ``None`` entries are ignored
            config_file: Flat ``key = value`` file
            environ: Environment mapping (defaults to ``os.environ``)

        Returns:
            Validated configuration

        Raises:
            ConfigurationError: Naming the offending flag
        """
        environ = os.environ if environ is None else environ
        values: Dict[str, Any] = {}
        if config_file is not None:
            values.update(read_config_file(config_file))

        overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        file_methods = values.pop("methods", {})
        flag_methods = overrides.pop("methods", {})
        values.update(overrides)
        values["methods"] = {**file_methods, **flag_methods}

        if "seed" not in values and SEED_ENV_VAR in environ:
            values["seed"] = _coerce("seed", environ[SEED_ENV_VAR], source=SEED_ENV_VAR)

        config = cls(**values)
        config.validate()
        return config

    def validate(self) -> None:
        is_valid, errors = ConfigValidator.validate_config(self)
        if self.default_method is not None and self.default_method not in (
            NUMERICAL_METHODS + CATEGORICAL_METHODS
        ):
            errors.append(f"--method: unknown method '{self.default_method}'")
        for name, method in self.methods.items():
            if method not in NUMERICAL_METHODS + CATEGORICAL_METHODS:
                errors.append(f"--method: unknown method '{method}' for field '{name}'")
        if errors:
            flag = errors[0].split(":", 1)[0]
            raise ConfigurationError("\n".join(errors), field=flag)

    def with_overrides(self, **changes: Any) -> "RunConfig":
        config = replace(self, **changes)
        config.validate()
        return config

    # -- method assignment -------------------------------------------------

    def resolve_methods(self, schema: FeatureSchema) -> Dict[str, str]:
        """
        Assign exactly one method to every schema field.

        A bare default method applies to every field whose kind supports it;
        per-field assignments win; remaining fields use ``deep``.

        Raises:
            ConfigurationError: For unknown fields or methods unsupported by a field's kind
        """
        unknown = sorted(set(self.methods) - set(schema.names))
        if unknown:
            raise ConfigurationError(
                f"unknown field(s) {', '.join(unknown)}; schema fields are {', '.join(schema.names)}",
                "--method",
            )

        assigned: Dict[str, str] = {}
        for spec in schema.fields:
            supported = NUMERICAL_METHODS if spec.is_numerical else CATEGORICAL_METHODS
            method = self.methods.get(spec.name)
            if method is None and self.default_method in supported:
                method = self.default_method
            if method is None:
                method = NumericalMethod.DEEP.value if spec.is_numerical else CategoricalMethod.DEEP.value
            if method not in supported:
                raise ConfigurationError(
                    f"method '{method}' is not available for {spec.kind} field '{spec.name}' "
                    f"(choose from {', '.join(supported)})",
                    "--method",
                )
            assigned[spec.name] = method

        if self.default_method is not None and self.default_method not in assigned.values():
            raise ConfigurationError(
                f"method '{self.default_method}' applies to no field of this schema", "--method"
            )
        return assigned

    def model_config(self, schema: FeatureSchema) -> ModelConfig:
        return ModelConfig(
            methods=self.resolve_methods(schema),
            d=self.d,
            d_hat=self.d_hat,
            layers=self.layers,
            width=self.width,
            cap=self.cap,
            buckets=self.buckets,
            temperature=self.temperature,
            cat_layers=self.cat_layers,
            cat_width=self.cat_width,
            hash_functions=self.hash_functions,
            hash_buckets=self.hash_buckets,
            backbone_hidden=tuple(self.backbone_hidden),
        )

    @property
    def run_seeds(self) -> List[int]:
        return [self.seed + i for i in range(self.seeds)]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["backbone_hidden"] = list(self.backbone_hidden)
        for key in _LOCAL_KEYS:
            data.pop(key)
        return data


def parse_method_flags(values: Iterable[str]) -> Tuple[Optional[str], Dict[str, str]]:
    """Split ``--method`` values into a bare default and ``field=method`` assignments."""
    default: Optional[str] = None
    per_field: Dict[str, str] = {}
    for raw in values:
        if "=" in raw:
            name, method = (s.strip() for s in raw.split("=", 1))
            if not name or not method:
                raise ConfigurationError(f"expected <field>=<method>, got '{raw}'", "--method")
            per_field[name] = method
        else:
            if default is not None and default != raw.strip():
                raise ConfigurationError(
                    f"more than one default method given ('{default}', '{raw}')", "--method"
                )
            default = raw.strip()
    return default, per_field


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_INT_KEYS = {
    "n", "v", "d", "d_hat", "layers", "width", "buckets", "cat_layers", "cat_width",
    "hash_functions", "hash_buckets", "batch", "patience", "max_epochs", "seeds", "seed",
}
_FLOAT_KEYS = {"cap", "temperature", "lr"}
_ALIASES = {"dhat": "d_hat", "method": "default_method"}


def _coerce(key: str, raw: str, source: str = "config") -> Any:
    flag = "--" + key.replace("_", "-")
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "backbone_hidden":
            return tuple(int(h) for h in raw.split(",") if h.strip())
    except ValueError:
        raise ConfigurationError(f"invalid value '{raw}' in {source}", flag) from None
    return raw


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Parse a flat ``key = value`` config file.

    Keys are ``RunConfig`` field names (dashes allowed). ``method = <m>`` sets
    the default method and ``method.<field> = <m>`` assigns one field.
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}", "--config") from None

    values: Dict[str, Any] = {}
    methods: Dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'", "--config")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key.startswith("method."):
            methods[key[len("method.") :]] = value
            continue
        key = _ALIASES.get(key, key)
        if key not in _FIELD_TYPES or key == "methods":
            raise ConfigurationError(f"{path}:{lineno}: unknown key '{key}'", "--config")
        values[key] = _coerce(key, value, source=f"{path}:{lineno}")
    if methods:
        values["methods"] = methods
    return values
