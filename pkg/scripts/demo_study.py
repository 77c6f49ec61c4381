#!/usr/bin/env python3
"""End-to-end walkthrough: design a study, simulate a wave, fit, report.

Writes items.csv, design.json, responses.csv and report.json into ./demo_out
and prints the rendered text report.

Run:  python scripts/demo_study.py
"""

from pathlib import Path

from maxdiff.cli import main as cli
from maxdiff.domain import Item, write_items_csv

ITEMS = [
    ("voice_control", "Voice Control", "Operate the tablet hands-free by voice"),
    ("simplified_ui", "Simplified interfaces", "Larger icons, fewer options"),
    ("live_captions", "Live Captions", "Show spoken dialogue as on-screen text"),
    ("screen_reader", "Faster screen reader", "Lower-latency reading of UI elements"),
    ("magnifier", "Screen magnifier", "Zoom any region with gesture control"),
    ("haptics", "Rich haptics", "Distinct vibration patterns per event"),
    ("color_filters", "Color filters", "Palettes for color-vision deficiencies"),
    ("switch_access", "Switch access", "Drive the UI from external switches"),
    ("voice_typing", "Voice typing", "Dictation with automatic punctuation"),
    ("hearing_aid", "Hearing-aid streaming", "Direct Bluetooth LE audio support"),
    ("big_text", "System-wide large text", "Global font scaling that never clips"),
    ("mono_audio", "Mono audio", "Single-channel playback toggle"),
]


def main() -> None:
    out = Path("demo_out")
    out.mkdir(exist_ok=True)
    items_csv = out / "items.csv"
    write_items_csv([Item(*row) for row in ITEMS], items_csv)

    cli(["design", "--items", str(items_csv), "-k", "3", "-T", "10", "-V", "6",
         "--seed", "7", "-o", str(out / "design.json")])
    cli(["simulate", "--design", str(out / "design.json"), "--items", str(items_csv),
         "--n", "350", "--span", "1.8", "--sd", "0.5", "--seed", "11",
         "-o", str(out / "responses.csv")])
    cli(["fit", "--responses", str(out / "responses.csv"), "--items", str(items_csv),
         "--bootstrap", "500", "--seed", "13", "-o", str(out / "report.json")])
    cli(["report", "--fit", str(out / "report.json"), "--format", "text"])


if __name__ == "__main__":
    main()
