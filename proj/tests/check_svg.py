"""Fails unless every .svg under the given directory is well-formed SVG."""
import pathlib
import sys
import xml.etree.ElementTree as ET

SVG = "{http://www.w3.org/2000/svg}"

root = pathlib.Path(sys.argv[1])
files = sorted(root.rglob("*.svg"))
if not files:
    sys.exit(f"no svg files under {root}")
for f in files:
    tree = ET.parse(f)
    top = tree.getroot()
    if top.tag != SVG + "svg":
        sys.exit(f"{f}: root element is {top.tag}")
    if top.find(SVG + "polyline") is None:
        sys.exit(f"{f}: no data series")
    print(f"ok {f}")
