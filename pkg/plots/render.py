#!/usr/bin/env python3
"""Render CSV artifacts from the cylwave CLI into figure panels.

Driven by a JSON figure spec:

    {
      "figsize": [9, 3],
      "layout": [1, 3],
      "panels": [
        {"kind": "gap_map", "input": "gap.csv", "xlabel": "reduced frequency",
         "ylabel": "r/d1"},
        {"kind": "gap_map_cut", "input": "gap.csv", "rows": [0.3, 0.35]},
        {"kind": "mode_field", "input": "field.csv", "contrast": "sqrt",
         "overlay": "array.csv"}
      ]
    }

Panel kinds: gap_map, gap_map_cut, scaling, mode_field, purcell_map, mdfa_h,
mdfa_tau, mdfa_spectrum, tpse_spectrum, spectrum.  Rendering is strictly
read-only: inputs are parsed, axis transforms applied (identity or square
root), nothing is recomputed.  Output bytes depend only on the spec and the
input files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class RenderError(Exception):
    """A figure cannot be rendered; the message names the offending path."""


def read_table(path):
    """Numeric CSV with an optional '# {json}' header and a column-name row."""
    path = Path(path)
    if not path.exists():
        raise RenderError(f"input CSV does not exist: {path}")
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                try:
                    meta = json.loads(line[1:].strip())
                except json.JSONDecodeError as exc:
                    raise RenderError(f"bad JSON header in {path}: {exc}") from exc
                continue
            try:
                rows.append([float(c) for c in line.split(",")])
            except ValueError:
                continue  # column-name row
    if not rows:
        raise RenderError(f"no numeric rows in {path}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise RenderError(f"ragged rows in {path}")
    return np.asarray(rows), meta


def _contrast(values, name):
    if name in (None, "identity"):
        return values
    if name == "sqrt":
        return np.sqrt(np.abs(values))
    raise RenderError(f"unknown contrast transform {name!r}")


def _labels(ax, panel):
    ax.set_xlabel(panel.get("xlabel", ""))
    ax.set_ylabel(panel.get("ylabel", ""))
    if panel.get("title"):
        ax.set_title(panel["title"])


def _panel_gap_map(ax, panel):
    table, meta = read_table(panel["input"])
    y, values = table[:, 0], table[:, 1:]
    x = np.asarray(meta.get("x_axis", np.arange(values.shape[1])), dtype=float)
    im = ax.pcolormesh(x, y, values, shading="nearest",
                       cmap=panel.get("cmap", "inferno"))
    ax.figure.colorbar(im, ax=ax, label=panel.get("cbar_label", "ln P"))
    _labels(ax, panel)


def _panel_gap_map_cut(ax, panel):
    table, meta = read_table(panel["input"])
    y, values = table[:, 0], table[:, 1:]
    x = np.asarray(meta.get("x_axis", np.arange(values.shape[1])), dtype=float)
    targets = panel.get("rows") or [float(y[len(y) // 2])]
    for target in targets:
        i = int(np.argmin(np.abs(y - float(target))))
        ax.plot(x, values[i], label=f"{y[i]:g}")
    ax.legend(fontsize="small")
    _labels(ax, panel)


def _panel_scaling(ax, panel):
    table, meta = read_table(panel["input"])
    sizes, midgap = table[:, 0], table[:, 1]
    ax.loglog(sizes, midgap, "o", color="tab:green")
    model, expo = meta.get("model"), meta.get("exponent")
    if model and expo is not None:
        xs = np.linspace(sizes.min(), sizes.max(), 200)
        if model == "exponential":
            ref = midgap[0] * np.exp(-expo * (xs - sizes[0]))
            tag = rf"$e^{{-{expo:.2g} L}}$"
        else:
            ref = midgap[0] * (xs / sizes[0]) ** (-expo)
            tag = rf"$L^{{-{expo:.2g}}}$"
        ax.loglog(xs, ref, "--", color="0.3", label=tag)
        ax.legend(fontsize="small")
    _labels(ax, panel)


def _panel_grid_image(ax, panel):
    table, meta = read_table(panel["input"])
    values = _contrast(table[:, 1:], panel.get("contrast"))
    window = meta.get("window")
    extent = None
    if window:
        (x0, x1), (y0, y1) = window
        extent = (x0, x1, y0, y1)
    ax.imshow(values, origin="lower", extent=extent, aspect="equal",
              cmap=panel.get("cmap", "viridis"))
    overlay = panel.get("overlay")
    if overlay:
        arr, _ = read_table(overlay)
        for cx, cy, radius in arr[:, :3]:
            ax.add_patch(plt.Circle((cx, cy), radius, fill=False,
                                    color="white", linewidth=0.4))
    ax.set_xticks([])
    ax.set_yticks([])
    _labels(ax, panel)


def _mdfa_columns(panel):
    table, _ = read_table(panel["input"])
    if table.shape[1] < 6:
        raise RenderError(f"expected q,H,tau,alpha,D,R2 columns in {panel['input']}")
    q, h, tau, alpha, d, _r2 = table.T[:6]
    return q, h, tau, alpha, d


def _panel_mdfa_h(ax, panel):
    q, h, _, _, _ = _mdfa_columns(panel)
    ax.plot(q, h, "o-")
    ax.set_xlabel(panel.get("xlabel", "q"))
    ax.set_ylabel(panel.get("ylabel", "H(q)"))
    if panel.get("title"):
        ax.set_title(panel["title"])


def _panel_mdfa_tau(ax, panel):
    q, _, tau, _, _ = _mdfa_columns(panel)
    ax.plot(q, tau, "o-")
    ax.set_xlabel(panel.get("xlabel", "q"))
    ax.set_ylabel(panel.get("ylabel", r"$\tau(q)$"))
    if panel.get("title"):
        ax.set_title(panel["title"])


def _panel_mdfa_spectrum(ax, panel):
    _, _, _, alpha, d = _mdfa_columns(panel)
    ax.plot(alpha, d, "o-")
    ax.set_xlabel(panel.get("xlabel", r"$\alpha$"))
    ax.set_ylabel(panel.get("ylabel", r"$D(\alpha)$"))
    if panel.get("title"):
        ax.set_title(panel["title"])


def _panel_tpse_spectrum(ax, panel):
    table, _ = read_table(panel["input"])
    ax.semilogy(table[:, 0], table[:, 1])
    ax.axhline(1.0, color="0.6", linewidth=0.6)
    _labels(ax, panel)


def _panel_spectrum(ax, panel):
    table, _ = read_table(panel["input"])
    ax.semilogy(table[:, 0], table[:, 1])
    _labels(ax, panel)


_PANELS = {
    "gap_map": _panel_gap_map,
    "gap_map_cut": _panel_gap_map_cut,
    "scaling": _panel_scaling,
    "mode_field": _panel_grid_image,
    "purcell_map": _panel_grid_image,
    "mdfa_h": _panel_mdfa_h,
    "mdfa_tau": _panel_mdfa_tau,
    "mdfa_spectrum": _panel_mdfa_spectrum,
    "tpse_spectrum": _panel_tpse_spectrum,
    "spectrum": _panel_spectrum,
}


def render(figure_spec: dict, out_path) -> Path:
    """Render the spec to a PNG; returns the output path."""
    panels = figure_spec.get("panels")
    if not panels:
        raise RenderError("figure spec has no panels")
    nrows, ncols = figure_spec.get("layout", (1, len(panels)))
    if nrows * ncols < len(panels):
        raise RenderError("layout too small for the panel list")
    figsize = figure_spec.get("figsize", (4.0 * ncols, 3.2 * nrows))
    fig, axes = plt.subplots(nrows, ncols, figsize=figsize, squeeze=False)
    flat = axes.ravel()
    try:
        for ax, panel in zip(flat, panels):
            kind = panel.get("kind")
            if kind not in _PANELS:
                raise RenderError(f"unknown panel kind {kind!r}")
            if "input" not in panel:
                raise RenderError(f"panel of kind {kind!r} has no input path")
            _PANELS[kind](ax, panel)
        for ax in flat[len(panels):]:
            ax.set_visible(False)
        fig.tight_layout()
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        # strip volatile PNG metadata so reruns are byte-identical
        fig.savefig(out_path, dpi=figure_spec.get("dpi", 150),
                    metadata={"Software": None})
    finally:
        plt.close(fig)
    return out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--spec", required=True, help="figure spec JSON file")
    parser.add_argument("--out", required=True, help="output PNG path")
    args = parser.parse_args(argv)
    try:
        with open(args.spec) as fh:
            figure_spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read figure spec {args.spec}: {exc}", file=sys.stderr)
        return 2
    try:
        render(figure_spec, args.out)
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
