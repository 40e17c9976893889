"""Graph-ordered group traversal (the .+ operator).

A traversal visits the starting node's host first, then forwards itself to
the children hosts concurrently, each forward carrying the traversal id and
the visited set. Every host runs the iterator method at most once per
traversal: the visited set prunes most duplicate forwards and a per-host
seen-registry makes the guarantee exact on cyclic or diamond topologies.
Per-node failures are collected, and the caller gets control back only when
every reachable node has reported completion; a non-empty failure list
surfaces as PartialFailure.
"""

from __future__ import annotations

from .errors import E_PARTIAL_FAILURE, E_REMOTE, EngineError
from .values import Array, CharArray, ObjectRef, TAG_ARRAY


def _encode_failures(failures: list[tuple[str, str]]) -> Array:
    return Array(TAG_ARRAY, [
        Array(TAG_ARRAY, [CharArray.from_str(host), CharArray.from_str(code)])
        for host, code in failures])


def decode_failures(value) -> list[tuple[str, str]]:
    out = []
    if isinstance(value, Array):
        for pair in value.items:
            if isinstance(pair, Array) and len(pair.items) == 2:
                out.append((pair.items[0].to_str(), pair.items[1].to_str()))
    return out


def iterate(engine, ctx, group_ref: ObjectRef, method: str, args: list):
    """Entry point for a traversal started at this engine."""
    tid = f"{engine.host_name}:{engine.next_traversal_id()}"
    if group_ref is None:
        raise EngineError("NullReference", "iterate on a null group")
    if group_ref.host == engine.host_name:
        result = yield from run_node(engine, ctx, group_ref, method, args, tid, [])
    else:
        result = yield from engine.send_traverse(group_ref, method, args, tid, [], ctx)
    failures = decode_failures(result)
    if failures:
        raise EngineError(E_PARTIAL_FAILURE,
                          "; ".join(f"{h}: {c}" for h, c in failures),
                          failures=failures)
    return None


def run_node(engine, ctx, node_ref: ObjectRef, method: str, args: list,
             tid: str, visited: list[str]):
    """Visit the local node of one traversal: run the iterator once, then
    forward to unvisited children and wait for all of them. Returns the
    collected (host, error-code) failure pairs."""
    if not engine.mark_traversal(tid):
        return _encode_failures([])
    failures: list[tuple[str, str]] = []
    try:
        yield from engine.invoke(node_ref, method, list(args), ctx)
    except EngineError as err:
        failures.append((engine.host_name, err.remote_code or err.code))

    children = None
    try:
        children = yield from engine.invoke(node_ref, "children", [], ctx)
    except EngineError as err:
        failures.append((engine.host_name, err.remote_code or err.code))

    targets: list[ObjectRef] = []
    seen_hosts = set(visited)
    seen_hosts.add(engine.host_name)
    if isinstance(children, Array):
        for child in children.items:
            if isinstance(child, ObjectRef) and child.host not in seen_hosts:
                seen_hosts.add(child.host)
                targets.append(child)

    token = sorted(seen_hosts)
    pending = []
    for child in targets:
        try:
            fut = engine.start_traverse(child, method, args, tid, token, ctx)
            pending.append((child, fut))
        except EngineError as err:
            failures.append((child.host, err.code))
    for child, fut in pending:
        try:
            result = yield fut
            sub = yield from engine.materialize(result, child.host, ctx)
            failures.extend(decode_failures(sub))
        except EngineError as err:
            code = err.remote_code if err.code == E_REMOTE and err.remote_code else err.code
            failures.append((child.host, code))
    return _encode_failures(failures)
