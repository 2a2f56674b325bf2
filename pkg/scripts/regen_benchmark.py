#!/usr/bin/env python3
"""Regeneration-time benchmark: desk-scale request -> published result.

Spins up the in-process loopback broker and the coverage service, publishes a
CoverageRequest carrying an inline ~1e4-triangle scene with a 512x512 grid,
1e6 rays and depth 3, and reports the wall time from publish to the result
message (the interactive click-to-new-map latency).

    python scripts/regen_benchmark.py [--rays 1000000] [--repeat 3]
"""

import argparse
import sys
import threading
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from raycover import bus, mqtt_wire  # noqa: E402
from raycover.bus import (  # noqa: E402
    CoverageRequest,
    GridParams,
    SceneInline,
    TraceParams,
    TxParams,
    encode_message,
)
from raycover.kernels import warm_up  # noqa: E402
from raycover.loopback import LoopbackBroker  # noqa: E402
from raycover.service import CoverageService  # noqa: E402
from conftest import town_scene  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rays", type=int, default=1_000_000)
    parser.add_argument("--depth", type=int, default=3)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    warm_up()
    scene_text = town_scene()
    print(f"scene: {len(scene_text) // 1024} KiB inline OBJ")

    with LoopbackBroker() as broker:
        session = mqtt_wire.connect(broker.host, broker.port, "svc")
        service = CoverageService(session)
        observer = mqtt_wire.connect(broker.host, broker.port, "bench")
        done = threading.Event()
        durations = {}

        def on_result(topic, payload):
            result = bus.decode_message(payload, bus.CoverageResult)
            durations[result.job_id] = result.duration_s
            done.set()

        observer.subscribe(bus.TOPIC_RESULT_PREFIX + "#", on_result)
        service.start()
        try:
            for k in range(args.repeat):
                req = CoverageRequest(
                    job_id=f"bench-{k}",
                    tx=TxParams(0.0, 0.0, 30.0, 2.4e9),
                    grid=GridParams(-256.0, -256.0, 256.0, 256.0, 1.0),
                    trace=TraceParams(rays=args.rays, max_depth=args.depth, seed=k),
                    scene=SceneInline(scene_text.encode()),
                )
                done.clear()
                t0 = time.perf_counter()
                observer.publish(bus.TOPIC_REQUEST, encode_message(req))
                done.wait(120.0)
                elapsed = time.perf_counter() - t0
                print(
                    f"run {k}: request->result {elapsed:6.2f}s "
                    f"(service-side simulation {durations[f'bench-{k}']:.2f}s)"
                )
        finally:
            service.stop()
            session.close()
            observer.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
