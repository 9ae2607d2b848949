"""Binary snapshots, CSV series and JSON reports (layouts in docs/formats.md)."""
import json
import os
import struct

import numpy as np

from . import __version__
from .kinetic import KineticState, KineticTrajectory
from .model import FrequencyGrid, ModelParams

MAGIC = b"KKSNAP\x00\x01"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIddd")  # magic, version, n_theta, n_omega, W, K, t


def write_snapshot(path, state, params):
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, state.n_theta, g.n, float(params.W),
                              float(params.K), float(state.t)))
        fh.write(struct.pack("<d", float(g.dw)))
        fh.write(np.asarray(g.nodes, dtype="<f8").tobytes())
        fh.write(np.asarray(g.weights, dtype="<f8").tobytes())
        fh.write(np.asarray(state.h, dtype="<f8").tobytes())


def read_snapshot(path):
    """Returns (KineticState, ModelParams)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, ver, nt, nw, W, K, t = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    if ver != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {ver}")
    off = _HEADER.size
    (dw,) = struct.unpack_from("<d", buf, off)
    off += 8
    arr = np.frombuffer(buf, dtype="<f8", offset=off)
    nodes, weights = arr[:nw].copy(), arr[nw:2 * nw].copy()
    h = arr[2 * nw:2 * nw + nw * nt].reshape(nw, nt).copy()
    grid = FrequencyGrid(nodes, weights, dw)
    return KineticState(t, grid, h), ModelParams(K, W)


def write_trajectory(outdir, traj):
    """snapshots/snap_NNNNN.bin plus steps.npz holding per-step (t, R, phi)."""
    sdir = os.path.join(outdir, "snapshots")
    os.makedirs(sdir, exist_ok=True)
    names = []
    for i, s in enumerate(traj.snapshots):
        name = os.path.join("snapshots", f"snap_{i:05d}.bin")
        write_snapshot(os.path.join(outdir, name), s, traj.params)
        names.append(name)
    np.savez(os.path.join(outdir, "steps.npz"), t=traj.step_times, R=traj.R_steps, phi=traj.phi_steps,
             dt=traj.dt, stride=traj.stride)
    return names + ["steps.npz"]


def read_trajectory(outdir):
    sdir = os.path.join(outdir, "snapshots")
    if not os.path.isdir(sdir):
        raise FileNotFoundError(f"no snapshots directory in {outdir}")
    files = sorted(f for f in os.listdir(sdir) if f.endswith(".bin"))
    if not files:
        raise FileNotFoundError(f"no snapshot files in {sdir}")
    snaps, params = [], None
    for f in files:
        s, params = read_snapshot(os.path.join(sdir, f))
        snaps.append(s)
    z = np.load(os.path.join(outdir, "steps.npz"))
    return KineticTrajectory(params, float(z["dt"]), int(z["stride"]), snaps, z["t"], z["R"], z["phi"], {})


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, columns, rows, config_hash):
    """First line: '# config_hash=<hash> version=<v>'; then a header and rows with 17 significant digits."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_hash={config_hash} version={__version__}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def read_csv(path):
    """Returns (config_hash, columns, float array of shape (n_rows, n_cols))."""
    with open(path) as fh:
        first = fh.readline().strip()
        cols = fh.readline().strip().split(",")
        data = [list(map(float, line.strip().split(","))) for line in fh if line.strip()]
    h = first.split("config_hash=")[1].split()[0] if "config_hash=" in first else None
    return h, cols, np.array(data, dtype=float).reshape(-1, len(cols))


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if np.isfinite(f) else None
    return o


def write_json(path, obj, config_hash):
    payload = {"config_hash": config_hash, "version": __version__, **_jsonable(obj)}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
