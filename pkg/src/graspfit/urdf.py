"""Robot-description parsing and forward kinematics.

Supports the subset of URDF needed for hand models: a tree of links
connected by revolute, prismatic, and fixed joints, plus linear joint
coupling via ``<mimic>``.  Geometry comes from referenced OBJ/STL meshes or
tessellated box/cylinder/sphere primitives; the first ``<visual>`` is used,
falling back to ``<collision>`` (one geometry set serves both purposes).

The joint vector ``q`` indexes the independent (non-fixed, non-mimic)
joints in document order; coupled joints derive their value as
``multiplier * q[master] + offset``.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CycleDetectedError,
    DofMismatchError,
    MissingLimitError,
    UnsupportedJointTypeError,
    XmlError,
)
from .rotations import axis_angle_matrix, quat_to_matrix, rpy_matrix

_SUPPORTED = ("revolute", "prismatic", "fixed")


@dataclass(frozen=True)
class GeometrySpec:
    """Shape attached to a link, with its mounting transform inside the link."""

    kind: str                      # "mesh" | "box" | "cylinder" | "sphere"
    origin_R: np.ndarray
    origin_t: np.ndarray
    filename: str | None = None
    scale: np.ndarray | None = None
    size: np.ndarray | None = None        # box
    radius: float | None = None           # cylinder / sphere
    length: float | None = None           # cylinder


@dataclass(frozen=True)
class Mimic:
    joint: str
    multiplier: float
    offset: float


@dataclass(frozen=True)
class Joint:
    name: str
    jtype: str
    parent: str
    child: str
    origin_R: np.ndarray
    origin_t: np.ndarray
    axis: np.ndarray
    lower: float | None
    upper: float | None
    mimic: Mimic | None


@dataclass(frozen=True)
class Link:
    name: str
    geometry: GeometrySpec | None


@dataclass
class KinematicModel:
    """Parsed joint tree with precomputed index structures.

    ``q_min``/``q_max`` cover the independent joints only; ``subtree`` maps
    each non-fixed joint to the boolean set of links it moves.
    """

    name: str
    links: list[Link]
    joints: list[Joint]
    root: int
    link_index: dict[str, int]
    topo_order: list[int] = field(default_factory=list)
    parent_joint: list[int | None] = field(default_factory=list)
    nonfixed: list[int] = field(default_factory=list)
    independent: list[int] = field(default_factory=list)
    col: np.ndarray | None = None       # per non-fixed joint: q column
    scale: np.ndarray | None = None     # per non-fixed joint: coupling gain
    offset: np.ndarray | None = None    # per non-fixed joint: coupling offset
    q_min: np.ndarray | None = None
    q_max: np.ndarray | None = None
    subtree: np.ndarray | None = None   # (n_nonfixed, n_links) bool
    adjacent: set[frozenset] = field(default_factory=set)

    @property
    def dof(self) -> int:
        return len(self.independent)

    @property
    def leaf_links(self) -> list[int]:
        """Links with no child joints, excluding the root."""
        has_child = {self.link_index[j.parent] for j in self.joints}
        return [i for i in range(len(self.links))
                if i not in has_child and i != self.root]

    def joint_values(self, q: np.ndarray) -> np.ndarray:
        """Expand the independent joint vector to all non-fixed joints."""
        q = np.asarray(q, dtype=float).reshape(-1)
        if len(q) != self.dof:
            raise DofMismatchError(
                f"model {self.name!r} expects {self.dof} joint values, got {len(q)}")
        return self.scale * q[self.col] + self.offset

    def mid_range(self) -> np.ndarray:
        """Middle of the limit interval for each independent joint."""
        return 0.5 * (self.q_min + self.q_max)


def _parse_origin(elem: ET.Element | None) -> tuple[np.ndarray, np.ndarray]:
    if elem is None:
        return np.eye(3), np.zeros(3)
    xyz = np.array([float(v) for v in elem.get("xyz", "0 0 0").split()])
    rpy = [float(v) for v in elem.get("rpy", "0 0 0").split()]
    if xyz.shape != (3,) or len(rpy) != 3:
        raise XmlError("origin must carry three xyz and three rpy values")
    return rpy_matrix(*rpy), xyz


def _parse_geometry(parent: ET.Element, tag: str) -> GeometrySpec | None:
    holder = parent.find(tag)
    if holder is None:
        return None
    geom = holder.find("geometry")
    if geom is None:
        raise XmlError(f"<{tag}> without <geometry>")
    origin_R, origin_t = _parse_origin(holder.find("origin"))
    mesh = geom.find("mesh")
    if mesh is not None:
        filename = mesh.get("filename")
        if not filename:
            raise XmlError("<mesh> without filename")
        scale = None
        if mesh.get("scale"):
            scale = np.array([float(v) for v in mesh.get("scale").split()])
        return GeometrySpec("mesh", origin_R, origin_t,
                            filename=filename, scale=scale)
    box = geom.find("box")
    if box is not None:
        size = np.array([float(v) for v in box.get("size", "").split()])
        if size.shape != (3,):
            raise XmlError("<box> needs a three-value size")
        return GeometrySpec("box", origin_R, origin_t, size=size)
    cyl = geom.find("cylinder")
    if cyl is not None:
        return GeometrySpec("cylinder", origin_R, origin_t,
                            radius=float(cyl.get("radius")),
                            length=float(cyl.get("length")))
    sph = geom.find("sphere")
    if sph is not None:
        return GeometrySpec("sphere", origin_R, origin_t,
                            radius=float(sph.get("radius")))
    raise XmlError("geometry must be mesh, box, cylinder, or sphere")


def parse_urdf(source: str) -> KinematicModel:
    """Parse a robot description from a file path or an XML string.

    Raises
    ------
    XmlError : malformed XML or structural violations.
    UnsupportedJointTypeError : joint type outside revolute/prismatic/fixed.
    MissingLimitError : non-fixed joint without usable limits.
    CycleDetectedError : joint graph is not a single-rooted tree.
    """
    if "<" not in source:
        if not os.path.isfile(source):
            raise XmlError(f"no such file: {source}")
        with open(source, "r", errors="replace") as fh:
            text = fh.read()
    else:
        text = source
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlError(f"XML parse failure: {exc}") from exc
    if root.tag != "robot":
        raise XmlError(f"expected <robot> root, found <{root.tag}>")

    links: list[Link] = []
    for le in root.findall("link"):
        name = le.get("name")
        if not name:
            raise XmlError("<link> without name")
        geometry = _parse_geometry(le, "visual")
        if geometry is None:
            geometry = _parse_geometry(le, "collision")
        links.append(Link(name, geometry))
    if not links:
        raise XmlError("robot has no links")
    link_index = {}
    for i, link in enumerate(links):
        if link.name in link_index:
            raise XmlError(f"duplicate link name {link.name!r}")
        link_index[link.name] = i

    joints: list[Joint] = []
    joint_names = set()
    for je in root.findall("joint"):
        name = je.get("name")
        jtype = je.get("type")
        if not name or name in joint_names:
            raise XmlError("joint missing a unique name")
        joint_names.add(name)
        if jtype not in _SUPPORTED:
            raise UnsupportedJointTypeError(
                f"joint {name!r} has unsupported type {jtype!r}")
        parent = je.find("parent")
        child = je.find("child")
        if parent is None or child is None:
            raise XmlError(f"joint {name!r} needs parent and child")
        pname, cname = parent.get("link"), child.get("link")
        if pname not in link_index or cname not in link_index:
            raise XmlError(f"joint {name!r} references unknown link")
        origin_R, origin_t = _parse_origin(je.find("origin"))
        axis_elem = je.find("axis")
        axis = np.array([1.0, 0.0, 0.0])
        if axis_elem is not None:
            axis = np.array([float(v) for v in axis_elem.get("xyz", "1 0 0").split()])
        norm = np.linalg.norm(axis)
        if jtype != "fixed":
            if norm == 0.0:
                raise XmlError(f"joint {name!r} has zero axis")
            axis = axis / norm
        lower = upper = None
        if jtype != "fixed":
            limit = je.find("limit")
            if limit is None or limit.get("lower") is None or limit.get("upper") is None:
                raise MissingLimitError(f"joint {name!r} lacks position limits")
            lower, upper = float(limit.get("lower")), float(limit.get("upper"))
            if not lower < upper:
                raise MissingLimitError(
                    f"joint {name!r} has degenerate limits [{lower}, {upper}]")
        mimic = None
        me = je.find("mimic")
        if me is not None:
            target = me.get("joint")
            if not target:
                raise XmlError(f"joint {name!r} mimic without target")
            mimic = Mimic(target,
                          float(me.get("multiplier", "1")),
                          float(me.get("offset", "0")))
        joints.append(Joint(name, jtype, pname, cname, origin_R, origin_t,
                            axis, lower, upper, mimic))

    model = KinematicModel(root.get("name", "robot"), links, joints, -1, link_index)
    _finalize(model)
    return model


def _finalize(model: KinematicModel) -> None:
    links, joints, link_index = model.links, model.joints, model.link_index
    n_links = len(links)
    parent_joint: list[int | None] = [None] * n_links
    for j, joint in enumerate(joints):
        ci = link_index[joint.child]
        if parent_joint[ci] is not None:
            raise CycleDetectedError(
                f"link {joint.child!r} has multiple parent joints")
        parent_joint[ci] = j
    roots = [i for i in range(n_links) if parent_joint[i] is None]
    if len(roots) == 0:
        raise CycleDetectedError("joint graph has no root link")
    if len(roots) > 1:
        names = ", ".join(links[i].name for i in roots)
        raise XmlError(f"joint graph is a forest with roots: {names}")
    model.root = roots[0]
    model.parent_joint = parent_joint

    children: dict[int, list[int]] = {i: [] for i in range(n_links)}
    for j, joint in enumerate(joints):
        children[link_index[joint.parent]].append(link_index[joint.child])
    order: list[int] = []
    stack = [model.root]
    seen = set()
    while stack:
        cur = stack.pop()
        if cur in seen:
            raise CycleDetectedError("joint graph contains a cycle")
        seen.add(cur)
        order.append(cur)
        stack.extend(reversed(children[cur]))
    if len(seen) != n_links:
        raise CycleDetectedError("joint graph contains an unreachable cycle")
    model.topo_order = order

    joint_by_name = {j.name: i for i, j in enumerate(joints)}
    model.nonfixed = [i for i, j in enumerate(joints) if j.jtype != "fixed"]

    def master_of(ji: int, trail: tuple[int, ...] = ()) -> tuple[int, float, float]:
        joint = joints[ji]
        if joint.mimic is None:
            return ji, 1.0, 0.0
        if ji in trail:
            raise CycleDetectedError(f"mimic cycle through joint {joint.name!r}")
        target = joint_by_name.get(joint.mimic.joint)
        if target is None:
            raise XmlError(f"joint {joint.name!r} mimics unknown joint "
                           f"{joint.mimic.joint!r}")
        if joints[target].jtype == "fixed":
            raise XmlError(f"joint {joint.name!r} mimics a fixed joint")
        base, gain, off = master_of(target, trail + (ji,))
        return base, gain * joint.mimic.multiplier, \
            joint.mimic.multiplier * off + joint.mimic.offset

    model.independent = [i for i in model.nonfixed if joints[i].mimic is None]
    col_of = {ji: c for c, ji in enumerate(model.independent)}
    cols, gains, offs = [], [], []
    for ji in model.nonfixed:
        base, gain, off = master_of(ji)
        cols.append(col_of[base])
        gains.append(gain)
        offs.append(off)
    model.col = np.array(cols, dtype=np.int64)
    model.scale = np.array(gains)
    model.offset = np.array(offs)
    model.q_min = np.array([joints[i].lower for i in model.independent])
    model.q_max = np.array([joints[i].upper for i in model.independent])

    descendants: dict[int, set[int]] = {i: {i} for i in range(n_links)}
    for li in reversed(order):
        for ci in children[li]:
            descendants[li] |= descendants[ci]
    sub = np.zeros((len(model.nonfixed), n_links), dtype=bool)
    for row, ji in enumerate(model.nonfixed):
        for li in descendants[link_index[joints[ji].child]]:
            sub[row, li] = True
    model.subtree = sub

    model.adjacent = {
        frozenset((link_index[j.parent], link_index[j.child])) for j in joints
    }


@dataclass
class BaseFrameKinematics:
    """Link poses in the gripper base frame plus per-joint motion data.

    ``joint_axis``/``joint_point`` give, for each non-fixed joint, the motion
    axis direction and a point on that axis, both in the base frame at the
    evaluated configuration.
    """

    R: np.ndarray          # (L, 3, 3)
    t: np.ndarray          # (L, 3)
    joint_axis: np.ndarray     # (J, 3)
    joint_point: np.ndarray    # (J, 3)


def fk_base(model: KinematicModel, q: np.ndarray) -> BaseFrameKinematics:
    """Forward kinematics with the root link at the identity pose."""
    values = model.joint_values(q)
    value_of = {ji: values[row] for row, ji in enumerate(model.nonfixed)}
    n_links = len(model.links)
    R = np.zeros((n_links, 3, 3))
    t = np.zeros((n_links, 3))
    R[model.root] = np.eye(3)
    joint_axis = np.zeros((len(model.nonfixed), 3))
    joint_point = np.zeros((len(model.nonfixed), 3))
    row_of = {ji: row for row, ji in enumerate(model.nonfixed)}

    for li in model.topo_order:
        ji = model.parent_joint[li]
        if ji is None:
            continue
        joint = model.joints[ji]
        pi = model.link_index[joint.parent]
        pre_R = R[pi] @ joint.origin_R
        pre_t = R[pi] @ joint.origin_t + t[pi]
        if joint.jtype == "fixed":
            R[li], t[li] = pre_R, pre_t
            continue
        row = row_of[ji]
        joint_axis[row] = pre_R @ joint.axis
        joint_point[row] = pre_t
        val = value_of[ji]
        if joint.jtype == "revolute":
            R[li] = pre_R @ axis_angle_matrix(joint.axis, val)
            t[li] = pre_t
        else:  # prismatic
            R[li] = pre_R
            t[li] = pre_t + joint_axis[row] * val
    return BaseFrameKinematics(R, t, joint_axis, joint_point)


def forward_kinematics(model: KinematicModel, rotation: np.ndarray,
                       translation: np.ndarray,
                       q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World-frame link transforms for a wrist pose and joint vector.

    Parameters
    ----------
    rotation : unit quaternion (w, x, y, z) of the wrist.
    translation : wrist position.
    q : independent joint values.

    Returns
    -------
    (L, 3, 3) rotations and (L, 3) translations, one row per link.
    """
    base = fk_base(model, q)
    Rw = quat_to_matrix(rotation)
    tw = np.asarray(translation, dtype=float)
    return np.einsum("ij,ljk->lik", Rw, base.R), base.t @ Rw.T + tw
