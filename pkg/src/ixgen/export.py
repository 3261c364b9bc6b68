"""OpenDRIVE (.xodr) and SVG plan-view serialization, plus the dataset manifest.

The OpenDRIVE subset targets the 1.6 vocabulary: header, road, planView with
parametric-cubic geometry (each Bezier segment maps exactly to one
paramPoly3 record via the Bernstein-to-monomial change of basis),
elevationProfile with piecewise cubic z(s) least-squares fits,
single-laneSection right-hand driving lanes, and one junction linking ramps
to their hosts. read_opendrive() understands exactly this subset and is only
meant for round-trip verification of files this module wrote.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IxgenError
from .geometry import _Basis
from .interchange import ConcreteInterchange

FLOAT = repr  # full-precision, deterministic attribute formatting
ELEVATION_FIT_LIMIT = 0.05  # meters
_SVG_RADIUS_COLORS = (
    (40.0, "#c0392b"),
    (80.0, "#e67e22"),
    (160.0, "#f1c40f"),
    (260.0, "#27ae60"),
    (math.inf, "#2980b9"),
)


class GeometryDegenerate(IxgenError):
    """A road or ramp contains a zero-length geometry segment."""


class UnsupportedElement(IxgenError):
    """The file uses OpenDRIVE features outside the written subset."""


# ---------------------------------------------------------------------------
# Writer
# ---------------------------------------------------------------------------


def _segment_plan_data(P: np.ndarray, n: int = 200):
    """Horizontal length plus within-segment s(t) and z(t) sample arrays."""
    basis = _Basis.get(n)
    d1 = basis.db @ P
    hspeed = np.sqrt(d1[:, 0] ** 2 + d1[:, 1] ** 2)
    ds = np.concatenate(
        [[0.0], np.cumsum((hspeed[1:] + hspeed[:-1]) / 2.0 * np.diff(basis.t))]
    )
    z = (basis.b @ P)[:, 2]
    return float(ds[-1]), ds, z


def _param_poly3(P: np.ndarray, hdg: float):
    """Local monomial coefficients of a Bezier segment in its start frame."""
    p0, p1, p2, p3 = (P[i, :2] for i in range(4))
    c1 = 3.0 * (p1 - p0)
    c2 = 3.0 * (p2 - 2.0 * p1 + p0)
    c3 = p3 - 3.0 * p2 + 3.0 * p1 - p0
    cos_h, sin_h = math.cos(hdg), math.sin(hdg)
    rot = np.array([[cos_h, sin_h], [-sin_h, cos_h]])
    u1, v1 = rot @ c1
    u2, v2 = rot @ c2
    u3, v3 = rot @ c3
    return (0.0, u1, u2, u3), (0.0, v1, v2, v3)


def _fit_elevations(s0: float, ds: np.ndarray, z: np.ndarray, depth: int = 0):
    """Cubic z(s) least-squares records, subdividing until the fit is tight."""
    local = ds - ds[0]
    A = np.stack([np.ones_like(local), local, local**2, local**3], axis=1)
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    err = float(np.abs(A @ coef - z).max())
    if err > 0.01 and depth < 3 and len(ds) >= 8:
        half = len(ds) // 2
        left = _fit_elevations(s0, ds[: half + 1], z[: half + 1], depth + 1)
        right = _fit_elevations(s0, ds[half:], z[half:], depth + 1)
        return left + right
    return [(s0 + float(ds[0]), tuple(float(c) for c in coef), err)]


def _road_element(vid: str, road_id: int, spline, lane_count: int, lane_width: float, junction: int):
    matrices = spline.matrices
    geoms = []
    s = 0.0
    elevation_records = []
    max_fit_err = 0.0
    for P in matrices:
        P = np.asarray(P, dtype=float)
        length, ds, z = _segment_plan_data(P)
        if length < 1e-9:
            raise GeometryDegenerate(f"{vid}: zero-length geometry segment")
        hdg = math.atan2(P[1, 1] - P[0, 1], P[1, 0] - P[0, 0])
        (au, bu, cu, du), (av, bv, cv, dv) = _param_poly3(P, hdg)
        geoms.append((s, P[0, 0], P[0, 1], hdg, length, (au, bu, cu, du, av, bv, cv, dv)))
        for rec_s, coefs, err in _fit_elevations(s, ds, z):
            elevation_records.append((rec_s, coefs))
            max_fit_err = max(max_fit_err, err)
        s += length
    if max_fit_err >= ELEVATION_FIT_LIMIT:
        raise GeometryDegenerate(f"{vid}: elevation fit error {max_fit_err:.3f} m exceeds limit")

    road = ET.Element(
        "road",
        name=vid,
        length=FLOAT(s),
        id=str(road_id),
        junction=str(junction),
    )
    plan = ET.SubElement(road, "planView")
    for g_s, x, y, hdg, length, coefs in geoms:
        geom = ET.SubElement(
            plan,
            "geometry",
            s=FLOAT(g_s),
            x=FLOAT(x),
            y=FLOAT(y),
            hdg=FLOAT(hdg),
            length=FLOAT(length),
        )
        au, bu, cu, du, av, bv, cv, dv = coefs
        ET.SubElement(
            geom,
            "paramPoly3",
            aU=FLOAT(au), bU=FLOAT(bu), cU=FLOAT(cu), dU=FLOAT(du),
            aV=FLOAT(av), bV=FLOAT(bv), cV=FLOAT(cv), dV=FLOAT(dv),
            pRange="normalized",
        )
    elev_profile = ET.SubElement(road, "elevationProfile")
    elev_profile.append(ET.Comment(f" max elevation fit error: {max_fit_err:.4f} m "))
    for rec_s, (a, b, c, d) in elevation_records:
        ET.SubElement(
            elev_profile, "elevation",
            s=FLOAT(rec_s), a=FLOAT(a), b=FLOAT(b), c=FLOAT(c), d=FLOAT(d),
        )

    lanes = ET.SubElement(road, "lanes")
    section = ET.SubElement(lanes, "laneSection", s="0.0")
    center = ET.SubElement(section, "center")
    lane0 = ET.SubElement(center, "lane", id="0", type="none", level="false")
    ET.SubElement(lane0, "roadMark", sOffset="0.0", type="solid", width="0.12")
    right = ET.SubElement(section, "right")
    for i in range(lane_count):
        lane = ET.SubElement(right, "lane", id=str(-(i + 1)), type="driving", level="false")
        ET.SubElement(lane, "width", sOffset="0.0", a=FLOAT(lane_width), b="0.0", c="0.0", d="0.0")
    return road, s


def write_opendrive(interchange: ConcreteInterchange, path: str | Path) -> None:
    """Serialize to a well-formed .xodr; deterministic bytes for equal input."""
    topology = interchange.feature.topology
    ordered_roads = [v for v in topology.roads if v in interchange.roads]
    ordered_ramps = [v for v in topology.ramps if v in interchange.ramps]
    ids = {vid: i + 1 for i, vid in enumerate(ordered_roads + ordered_ramps)}
    junction_id = len(ids) + 1

    root = ET.Element("OpenDRIVE")
    ET.SubElement(
        root,
        "header",
        revMajor="1",
        revMinor="6",
        name=interchange.id,
        version="1.00",
        vendor="ixgen",
    )

    has_ramps = bool(ordered_ramps)
    for vid in ordered_roads:
        geometry = interchange.roads[vid]
        road, _ = _road_element(
            vid, ids[vid], geometry.centerline, geometry.lane_count, geometry.lane_width, -1
        )
        root.append(road)
    lane_width = next(iter(interchange.roads.values())).lane_width if interchange.roads else 3.75
    for vid in ordered_ramps:
        ramp = interchange.ramps[vid]
        road, _ = _road_element(
            vid, ids[vid], ramp.spline, 1, lane_width, junction_id if has_ramps else -1
        )
        link = ET.Element("link")
        start_host = _connection_host(interchange, vid, start=True)
        end_host = _connection_host(interchange, vid, start=False)
        if start_host in ids:
            ET.SubElement(link, "predecessor", elementType="road", elementId=str(ids[start_host]))
        if end_host in ids:
            ET.SubElement(link, "successor", elementType="road", elementId=str(ids[end_host]))
        road.insert(0, link)
        root.append(road)

    if has_ramps:
        junction = ET.SubElement(root, "junction", id=str(junction_id), name=interchange.id)
        conn_id = 0
        for conn in interchange.connections:
            ramp_vid = conn.target if conn.label.is_out else conn.source
            if ramp_vid not in ids or conn.host not in ids:
                continue
            c = ET.SubElement(
                junction,
                "connection",
                id=str(conn_id),
                incomingRoad=str(ids[conn.host]),
                connectingRoad=str(ids[ramp_vid]),
                contactPoint="start" if conn.label.is_out else "end",
            )
            ET.SubElement(c, "laneLink", attrib={"from": "-1", "to": "-1"})
            conn_id += 1

    tree = ET.ElementTree(root)
    ET.indent(tree, space="  ")
    tree.write(path, encoding="utf-8", xml_declaration=True)


def _connection_host(interchange: ConcreteInterchange, ramp_vid: str, start: bool) -> str | None:
    for conn in interchange.connections:
        if start and conn.label.is_out and conn.target == ramp_vid:
            return conn.host
        if not start and not conn.label.is_out and conn.source == ramp_vid:
            return conn.host
    return None


# ---------------------------------------------------------------------------
# Subset reader (round-trip verification)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReadRoad:
    name: str
    road_id: int
    is_connecting: bool  # belongs to a junction, i.e. a ramp
    lane_count: int
    lane_width: float
    polyline: np.ndarray  # (N, 3) sampled centerline
    length: float
    geometry_s: tuple[tuple[float, float], ...]  # per-record (s, length)


@dataclass(frozen=True)
class OpenDriveNetwork:
    name: str
    roads: dict[str, ReadRoad]
    connections: tuple[tuple[str, str, str], ...]  # incoming, connecting, contactPoint


def read_opendrive(path: str | Path, samples_per_geometry: int = 200) -> OpenDriveNetwork:
    """Re-read a file produced by write_opendrive (subset reader).

    Geometry comes back as sampled polylines: paramPoly3 records are evaluated
    exactly; heights follow the elevation records against cumulative
    horizontal arc length.
    """
    tree = ET.parse(path)
    root = tree.getroot()
    if root.tag != "OpenDRIVE":
        raise UnsupportedElement(f"root element {root.tag!r}")
    header = root.find("header")
    name = header.get("name", "") if header is not None else ""

    id_to_name: dict[str, str] = {}
    roads: dict[str, ReadRoad] = {}
    for road in root.findall("road"):
        rname = road.get("name")
        rid = int(road.get("id"))
        junction = road.get("junction", "-1")
        id_to_name[road.get("id")] = rname

        elevations = []
        profile = road.find("elevationProfile")
        if profile is not None:
            for el in profile.findall("elevation"):
                elevations.append(
                    (float(el.get("s")), tuple(float(el.get(k)) for k in "abcd"))
                )
        elevations.sort(key=lambda rec: rec[0])

        def z_at(s: float) -> float:
            rec_s, coefs = elevations[0] if elevations else (0.0, (0.0, 0.0, 0.0, 0.0))
            for cand_s, cand_c in elevations:
                if cand_s <= s + 1e-9:
                    rec_s, coefs = cand_s, cand_c
                else:
                    break
            ds = s - rec_s
            a, b, c, d = coefs
            return a + b * ds + c * ds**2 + d * ds**3

        points = []
        geometry_s = []
        plan = road.find("planView")
        if plan is None:
            raise UnsupportedElement(f"road {rname!r} has no planView")
        for geom in plan.findall("geometry"):
            poly = geom.find("paramPoly3")
            if poly is None:
                children = [c.tag for c in geom]
                raise UnsupportedElement(f"road {rname!r} uses geometry {children} (paramPoly3 only)")
            s0 = float(geom.get("s"))
            x0, y0 = float(geom.get("x")), float(geom.get("y"))
            hdg = float(geom.get("hdg"))
            length = float(geom.get("length"))
            geometry_s.append((s0, length))
            au, bu, cu, du = (float(poly.get(k)) for k in ("aU", "bU", "cU", "dU"))
            av, bv, cv, dv = (float(poly.get(k)) for k in ("aV", "bV", "cV", "dV"))
            p = np.linspace(0.0, 1.0, samples_per_geometry)
            u = au + bu * p + cu * p**2 + du * p**3
            v = av + bv * p + cv * p**2 + dv * p**3
            cos_h, sin_h = math.cos(hdg), math.sin(hdg)
            x = x0 + u * cos_h - v * sin_h
            y = y0 + u * sin_h + v * cos_h
            step = np.hypot(np.diff(x), np.diff(y))
            s = s0 + np.concatenate([[0.0], np.cumsum(step)])
            z = np.array([z_at(si) for si in s])
            points.append(np.stack([x, y, z], axis=1))

        lane_count = 0
        lane_width = 0.0
        section = road.find("lanes/laneSection")
        if section is not None:
            for lane in section.findall("right/lane"):
                if lane.get("type") == "driving":
                    lane_count += 1
                    width = lane.find("width")
                    if width is not None:
                        lane_width = float(width.get("a"))
        roads[rname] = ReadRoad(
            name=rname,
            road_id=rid,
            is_connecting=junction != "-1",
            lane_count=lane_count,
            lane_width=lane_width,
            polyline=np.vstack(points),
            length=float(road.get("length")),
            geometry_s=tuple(geometry_s),
        )

    connections = []
    for junction in root.findall("junction"):
        for conn in junction.findall("connection"):
            connections.append(
                (
                    id_to_name.get(conn.get("incomingRoad"), conn.get("incomingRoad")),
                    id_to_name.get(conn.get("connectingRoad"), conn.get("connectingRoad")),
                    conn.get("contactPoint"),
                )
            )
    return OpenDriveNetwork(name=name, roads=roads, connections=tuple(connections))


# ---------------------------------------------------------------------------
# SVG plan view
# ---------------------------------------------------------------------------


def _radius_color(min_radius: float) -> str:
    for limit, color in _SVG_RADIUS_COLORS:
        if min_radius <= limit:
            return color
    return _SVG_RADIUS_COLORS[-1][1]


def _svg_path(spline) -> str:
    parts = []
    for i, P in enumerate(spline.matrices):
        P = np.asarray(P)
        if i == 0:
            parts.append(f"M {P[0,0]:.3f},{-P[0,1]:.3f}")
        parts.append(
            f"C {P[1,0]:.3f},{-P[1,1]:.3f} {P[2,0]:.3f},{-P[2,1]:.3f} {P[3,0]:.3f},{-P[3,1]:.3f}"
        )
    return " ".join(parts)


def write_svg(
    interchange: ConcreteInterchange,
    path: str | Path,
    show_labels: bool = False,
    scale: float = 1.0,
) -> None:
    """Plan-view diagram: road width tracks lane count, ramp color the achieved radius."""
    xs: list[float] = []
    ys: list[float] = []
    for geometry in interchange.roads.values():
        for P in geometry.centerline.matrices:
            xs.extend(np.asarray(P)[:, 0])
            ys.extend(-np.asarray(P)[:, 1])
    for ramp in interchange.ramps.values():
        for P in ramp.spline.matrices:
            xs.extend(np.asarray(P)[:, 0])
            ys.extend(-np.asarray(P)[:, 1])
    if not xs:
        xs, ys = [0.0], [0.0]
    pad = 40.0
    min_x, max_x = min(xs) - pad, max(xs) + pad
    min_y, max_y = min(ys) - pad, max(ys) + pad

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{min_x:.1f} {min_y:.1f} '
        f'{max_x - min_x:.1f} {max_y - min_y:.1f}" width="{(max_x - min_x) * scale:.0f}" '
        f'height="{(max_y - min_y) * scale:.0f}">',
        f'<!-- {interchange.id} -->',
        '<rect x="{:.1f}" y="{:.1f}" width="{:.1f}" height="{:.1f}" fill="#fafafa"/>'.format(
            min_x, min_y, max_x - min_x, max_y - min_y
        ),
    ]
    topology = interchange.feature.topology
    for vid in topology.roads:
        if vid not in interchange.roads:
            continue
        geometry = interchange.roads[vid]
        width = geometry.lane_count * geometry.lane_width
        lines.append(
            f'<path d="{_svg_path(geometry.centerline)}" fill="none" stroke="#555555" '
            f'stroke-width="{width:.2f}" stroke-linecap="round"/>'
        )
    for vid in topology.ramps:
        if vid not in interchange.ramps:
            continue
        ramp = interchange.ramps[vid]
        color = _radius_color(ramp.achieved.min_radius)
        lines.append(
            f'<path d="{_svg_path(ramp.spline)}" fill="none" stroke="{color}" '
            f'stroke-width="4.00" stroke-linecap="round"/>'
        )
    if show_labels:
        for vid in topology.roads:
            if vid not in interchange.roads:
                continue
            mid = interchange.roads[vid].centerline.evaluate(0.5)
            lines.append(f'<text x="{mid.x:.1f}" y="{-mid.y:.1f}" font-size="14">{vid}</text>')
        for vid in topology.ramps:
            if vid not in interchange.ramps:
                continue
            mid = interchange.ramps[vid].spline.evaluate(0.5)
            lines.append(f'<text x="{mid.x:.1f}" y="{-mid.y:.1f}" font-size="12">{vid}</text>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Dataset manifest
# ---------------------------------------------------------------------------

MANIFEST_COLUMNS = (
    "id",
    "class_id",
    "success",
    "n_roads",
    "n_ramps",
    "lanes",
    "ramp_targets",
    "ramp_achieved",
    "generations",
    "failed_ramps",
)


def _fmt_radius(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:g}"


def manifest_row(interchange: ConcreteInterchange, failures: dict[str, float] | None = None) -> dict:
    feature = interchange.feature
    topology = feature.topology
    lanes = ",".join(f"{r}={feature.lanes[r]}" for r in topology.roads)
    targets = ",".join(
        f"{r}={_fmt_radius(feature.ramp_geometry[r][0])}/{feature.ramp_geometry[r][1]:g}"
        for r in topology.ramps
    )
    achieved = ",".join(
        f"{r}={_fmt_radius(interchange.ramps[r].achieved.min_radius)}"
        f"/{interchange.ramps[r].achieved.max_abs_slope:.3f}"
        for r in topology.ramps
        if r in interchange.ramps
    )
    failed = sorted(failures) if failures else []
    return {
        "id": interchange.id,
        "class_id": str(interchange.topology_class),
        "success": "true" if not failed else "false",
        "n_roads": str(len(topology.roads)),
        "n_ramps": str(len(topology.ramps)),
        "lanes": lanes or "-",
        "ramp_targets": targets or "-",
        "ramp_achieved": achieved or "-",
        "generations": str(sum(r.generations for r in interchange.ramps.values())),
        "failed_ramps": ",".join(failed) if failed else "-",
    }


def write_manifest(rows: list[dict], path: str | Path) -> None:
    """Tab-separated manifest, one row per interchange, sorted by id."""
    lines = ["\t".join(MANIFEST_COLUMNS)]
    for row in sorted(rows, key=lambda r: r["id"]):
        lines.append("\t".join(row[c] for c in MANIFEST_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise IxgenError(f"{path}: empty manifest")
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"))) for line in lines[1:] if line]
