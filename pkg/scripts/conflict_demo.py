#!/usr/bin/env python3
"""Walk through one mediated conflict end to end, printing each exchange.

Starts an in-process service over a throwaway workspace, races two sessions
on the same file, and shows the rejection payload (kind, stale versions,
diff, reservation) followed by the refresh-and-retry that lands the write.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from wscoord.mediator import Mediator, MediatorConfig  # noqa: E402
from wscoord.store import Workspace  # noqa: E402


def main() -> int:
    store = Workspace.init_from_contents({
        "pricing.py": b"def total(items):\n    return sum(items)\n",
    })
    mediator = Mediator(store, MediatorConfig())
    alice = mediator.open_session("engineer", author="alice").session_id
    bob = mediator.open_session("engineer", author="bob").session_id

    for sid, name in ((alice, "alice"), (bob, "bob")):
        _, version = mediator.mediated_read(sid, "pricing.py")
        print(f"{name} reads pricing.py at v{version}")

    outcome = mediator.submit_write(
        alice, "pricing.py",
        b"def total(items):\n    return round(sum(items), 2)\n")
    print(f"alice writes -> accepted at v{outcome.new_version}")

    outcome = mediator.submit_write(
        bob, "pricing.py",
        b"def total(items):\n    return sum(items) or 0\n")
    conflict = outcome.conflict
    print(f"bob writes  -> rejected ({conflict.kind})")
    for path, observed, current in conflict.stale:
        print(f"  stale: {path} observed v{observed}, current v{current}")
    print("  diff since bob's snapshot:")
    for line in conflict.target_diff.splitlines():
        print(f"    {line}")
    print(f"  reservation granted to {conflict.reservation.holder} "
          f"(ttl {conflict.reservation.ttl} ms)")

    mediator.refresh_snapshot(bob, ["pricing.py"])
    current = store.get("pricing.py").content
    merged = current.replace(b"sum(items)", b"sum(items) or 0", 1)
    outcome = mediator.submit_write(bob, "pricing.py", merged)
    print(f"bob refreshes, rebases his edit -> accepted at "
          f"v{outcome.new_version}")
    print()
    print("final content:")
    for line in store.get("pricing.py").content.decode().splitlines():
        print(f"  {line}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
