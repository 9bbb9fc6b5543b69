"""DocGenerator: writes the run-configuration reference from the pydantic models."""

import json
import os
from typing import Annotated, List, Literal, Optional, Tuple, Type, Union, get_args, get_origin

from pydantic import BaseModel

from demrisk.config import (
    CohortBlock,
    ConstantScaling,
    CurveSource,
    DecomposeBlock,
    ExpenseBlock,
    LinearScaling,
    OutputBlock,
    PolicyBlock,
    RunConfig,
    SimulationBlock,
    TableSource,
    VasicekBlock,
)

BLOCKS: List[Tuple[str, Type[BaseModel]]] = [
    ("(root)", RunConfig),
    ("tables.<name>", TableSource),
    ("tables.<name>.scaling (constant)", ConstantScaling),
    ("tables.<name>.scaling (linear)", LinearScaling),
    ("curve", CurveSource),
    ("vasicek", VasicekBlock),
    ("policies[]", PolicyBlock),
    ("policies[].cohort", CohortBlock),
    ("simulation", SimulationBlock),
    ("decompose", DecomposeBlock),
    ("decompose.expenses", ExpenseBlock),
    ("output", OutputBlock),
]


class DocGenerator:
    """Generates ``config_schema.json`` and ``config.md``.

    Methods
    -------
    generate(out_dir):
        Write both files and return their paths.
    """

    def __init__(self, doc_dir: Optional[str] = None) -> None:
        root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
        self.doc_dir = doc_dir or os.path.join(root, "docs")

    def generate(self, out_dir: Optional[str] = None) -> List[str]:
        out_dir = out_dir or self.doc_dir
        os.makedirs(out_dir, exist_ok=True)

        schema_path = os.path.join(out_dir, "config_schema.json")
        with open(schema_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(RunConfig.model_json_schema(), sort_keys=True, indent=2) + "\n")

        md_path = os.path.join(out_dir, "config.md")
        with open(md_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self._markdown()))
        return [schema_path, md_path]

    def _markdown(self) -> List[str]:
        lines = [
            "# Run configuration",
            "",
            "One JSON document per run. Relative paths resolve against the config file's",
            "directory. `DEMRISK_OUT_DIR` and `DEMRISK_WORKERS` override `output.directory`",
            "and `simulation.workers`.",
            "",
        ]
        for title, model in BLOCKS:
            lines += [f"## `{title}`", ""]
            doc = (model.__doc__ or "").strip()
            if doc:
                lines += [doc.splitlines()[0], ""]
            lines += ["| field | type | default |", "|---|---|---|"]
            for name, info in model.model_fields.items():
                lines.append(f"| `{name}` | {_type_name(info.annotation)} | {self._default(info)} |")
            lines.append("")
        return lines

    @staticmethod
    def _default(info) -> str:
        if info.is_required():
            return "required"
        if info.default_factory is not None:
            return f"`{json.dumps(_dump(info.default_factory()))}`"
        return f"`{json.dumps(_dump(info.default))}`"


def _type_name(annotation) -> str:
    origin = get_origin(annotation)
    if origin is Annotated:
        return _type_name(get_args(annotation)[0])
    if origin is None:
        return getattr(annotation, "__name__", str(annotation))
    if origin is Literal:
        return " or ".join(repr(a) for a in get_args(annotation))
    args = [_type_name(a) for a in get_args(annotation)]
    if origin is Union:
        if "NoneType" in args:
            rest = [a for a in args if a != "NoneType"]
            return f"Optional[{' or '.join(rest)}]"
        return " or ".join(args)
    return f"{getattr(origin, '__name__', str(origin))}[{', '.join(args)}]"


def _dump(value):
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, tuple):
        return list(value)
    return value


if __name__ == "__main__":
    DocGenerator().generate()
