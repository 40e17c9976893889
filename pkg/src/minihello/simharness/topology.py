"""Topology files: hosts, links, programs to run, and scripted faults.

Line forms:
    host <name> [primary]
    link <a> <b> [latency]
    run <host> <rpk-path> [args...]
    at <tick> drop <a> <b>
    at <tick> kill <host>
Blank lines and lines starting with # are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Topology:
    hosts: list[tuple[str, bool]] = field(default_factory=list)
    links: list[tuple[str, str, int]] = field(default_factory=list)
    runs: list[tuple[str, str, list[str]]] = field(default_factory=list)
    actions: list[tuple[int, str, tuple]] = field(default_factory=list)

    def host_names(self) -> list[str]:
        return [name for name, _ in self.hosts]

    def validate(self) -> None:
        names = set(self.host_names())
        if len(names) != len(self.hosts):
            raise ValueError("duplicate host name")
        for a, b, _lat in self.links:
            if a not in names or b not in names:
                raise ValueError(f"link references unknown host: {a}-{b}")
            if a == b:
                raise ValueError("link endpoints must differ")
        for host, _rpk, _args in self.runs:
            if host not in names:
                raise ValueError(f"run references unknown host: {host}")
        for _tick, kind, args in self.actions:
            for name in (args if kind == "kill" else args):
                if name not in names:
                    raise ValueError(f"script references unknown host: {name}")


def parse_topology_text(text: str, where: str = "<topology>") -> Topology:
    topo = Topology()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "host":
                primary = len(parts) > 2 and parts[2] == "primary"
                topo.hosts.append((parts[1], primary))
            elif parts[0] == "link":
                latency = int(parts[3]) if len(parts) > 3 else 1
                topo.links.append((parts[1], parts[2], latency))
            elif parts[0] == "run":
                topo.runs.append((parts[1], parts[2], parts[3:]))
            elif parts[0] == "at":
                tick = int(parts[1])
                if parts[2] == "drop":
                    topo.actions.append((tick, "drop", (parts[3], parts[4])))
                elif parts[2] == "kill":
                    topo.actions.append((tick, "kill", (parts[3],)))
                else:
                    raise ValueError(f"unknown action '{parts[2]}'")
            else:
                raise ValueError(f"unknown directive '{parts[0]}'")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{where}:{lineno}: {exc}") from exc
    topo.validate()
    return topo


def parse_topology(path: str) -> Topology:
    with open(path, "r", encoding="utf-8") as f:
        return parse_topology_text(f.read(), path)
