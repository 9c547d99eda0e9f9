"""Model serialization: one versioned, tab-separated text document.

The document carries the column codecs, the edge list, and every CPT in a
fixed field order. Floats are written with their shortest exact repr, so
``load(serialize(model))`` reproduces the model bit for bit and retraining
on identical inputs yields byte-identical files.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .graph import Dag
from .learn import Cpt, DiscreteBayesNet
from .telemetry import ColumnCodec, DiscretizationMap, KIND_BOOLEAN, KIND_NUMERIC

FORMAT_TAG = "slobn-model"
FORMAT_VERSION = "1"


class ModelFormatError(ValueError):
    """The model document is malformed or has an unsupported version."""


def _float_repr(value: float) -> str:
    return repr(float(value))


def serialize_model(bn: DiscreteBayesNet) -> str:
    out = io.StringIO()
    out.write(f"{FORMAT_TAG}\t{FORMAT_VERSION}\n")

    out.write("[codecs]\n")
    for node in bn.dag.nodes:
        codec = bn.codec.codec(node)
        fields = [codec.name, codec.kind, codec.unit, "1" if codec.parameterizable else "0"]
        if codec.is_identity:
            if codec.kind == KIND_BOOLEAN:
                fields.append("identity-boolean")
            elif codec.kind == KIND_NUMERIC:
                fields.append("identity-numeric")
                fields.extend(_float_repr(v) for v in codec.values)
            else:
                fields.append("identity-nominal")
                fields.extend(str(v) for v in codec.values)
        else:
            fields.append("bins")
            fields.extend(_float_repr(c) for c in codec.cuts)
        out.write("\t".join(fields) + "\n")

    out.write("[edges]\n")
    position = {n: i for i, n in enumerate(bn.dag.nodes)}
    for u, v in sorted(bn.dag.edges, key=lambda e: (position[e[0]], position[e[1]])):
        out.write(f"{u}\t{v}\n")

    for node in bn.dag.nodes:
        cpt = bn.cpts[node]
        out.write("[cpt]\n")
        out.write(f"variable\t{node}\n")
        out.write("\t".join(("parents",) + cpt.parents) + "\n")
        out.write(f"alpha\t{_float_repr(cpt.alpha)}\n")
        for i, row in enumerate(cpt.table):
            out.write(f"row\t{i}\t" + "\t".join(_float_repr(p) for p in row) + "\n")
    return out.getvalue()


def save_model(bn: DiscreteBayesNet, path: str | Path) -> None:
    Path(path).write_text(serialize_model(bn), encoding="utf-8")


def _parse_codec(fields: list[str]) -> ColumnCodec:
    if len(fields) < 5:
        raise ModelFormatError(f"codec line too short: {fields}")
    name, kind, unit, param_flag, method = fields[:5]
    parameterizable = param_flag == "1"
    payload = fields[5:]
    if method == "identity-boolean":
        return ColumnCodec(name, kind, unit, parameterizable, values=(False, True))
    if method == "identity-numeric":
        return ColumnCodec(name, kind, unit, parameterizable,
                           values=tuple(float(v) for v in payload))
    if method == "identity-nominal":
        return ColumnCodec(name, kind, unit, parameterizable, values=tuple(payload))
    if method == "bins":
        return ColumnCodec(name, kind, unit, parameterizable,
                           cuts=tuple(float(c) for c in payload))
    raise ModelFormatError(f"unknown codec method {method!r}")


def parse_model(text: str) -> DiscreteBayesNet:
    lines = text.splitlines()
    if not lines:
        raise ModelFormatError("empty model document")
    header = lines[0].split("\t")
    if len(header) != 2 or header[0] != FORMAT_TAG:
        raise ModelFormatError("not a model document (bad header line)")
    if header[1] != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {header[1]!r}")

    codecs: list[ColumnCodec] = []
    edges: set[tuple[str, str]] = set()
    cpt_blocks: list[dict] = []
    section = None
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("["):
            if line == "[codecs]":
                section = "codecs"
            elif line == "[edges]":
                section = "edges"
            elif line == "[cpt]":
                section = "cpt"
                cpt_blocks.append({"rows": {}})
            else:
                raise ModelFormatError(f"line {line_no}: unknown section {line!r}")
            continue
        fields = line.split("\t")
        if section == "codecs":
            codecs.append(_parse_codec(fields))
        elif section == "edges":
            if len(fields) != 2:
                raise ModelFormatError(f"line {line_no}: malformed edge")
            edges.add((fields[0], fields[1]))
        elif section == "cpt":
            block = cpt_blocks[-1]
            key = fields[0]
            if key == "variable":
                block["variable"] = fields[1]
            elif key == "parents":
                block["parents"] = tuple(fields[1:])
            elif key == "alpha":
                block["alpha"] = float(fields[1])
            elif key == "row":
                block["rows"][int(fields[1])] = [float(p) for p in fields[2:]]
            else:
                raise ModelFormatError(f"line {line_no}: unknown CPT field {key!r}")
        else:
            raise ModelFormatError(f"line {line_no}: content before any section")

    if not codecs:
        raise ModelFormatError("model document declares no variables")
    codec_map = DiscretizationMap(tuple(codecs))
    metas = codec_map.metas()
    dag = Dag(tuple(c.name for c in codecs), frozenset(edges))

    cpts: dict[str, Cpt] = {}
    for block in cpt_blocks:
        try:
            variable = block["variable"]
            parents = block.get("parents", ())
            alpha = block.get("alpha", 0.0)
            rows = block["rows"]
        except KeyError as exc:
            raise ModelFormatError(f"CPT block missing field {exc}") from None
        table = np.array([rows[i] for i in range(len(rows))], dtype=np.float64)
        table.flags.writeable = False
        cpts[variable] = Cpt(variable, parents, table, alpha)

    return DiscreteBayesNet(dag, cpts, metas, codec_map)


def load_model(path: str | Path) -> DiscreteBayesNet:
    return parse_model(Path(path).read_text(encoding="utf-8"))
