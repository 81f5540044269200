"""Smoke test for the iris_py extension module.

Build and install first:
    maturin build -m crates/py/Cargo.toml --release
    pip install target/wheels/iris_py-*.whl
"""

import pathlib
import tempfile

import iris_py

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def check_imaging_and_barcode():
    img = iris_py.Image.open(FIXTURES / "images" / "barcode.pgm")
    assert iris_py.Image.from_pgm(img.to_pgm()).digest() == img.digest()
    binary = img.otsu_threshold()
    assert set(binary.pixels) <= {0, 255}
    digits = iris_py.decode_barcode(img)
    assert digits == "4006381333931", digits
    name, price = iris_py.lookup_product(digits, FIXTURES / "catalog.csv")
    assert (name, price) == ("Ballpoint pen", "2.49 EUR")
    line = iris_py.encode_scanline("5901234123457", 3, 30)
    assert iris_py.decode_scanline(line[::-1]) == "5901234123457"
    assert iris_py.checksum_digit("400638133393") == 1


def check_router():
    assert iris_py.normalize("  READ   this. ") == ["read", "this"]
    assert iris_py.route("read my notes")[0] == "NoteRetrieve"
    kind, slots = iris_py.route("this is maria")
    assert kind == "FaceEnroll" and dict(slots)["person_name"] == "Maria"
    assert iris_py.route("please hello world")[0] == "Unknown"


def check_faces_money_notes(tmp):
    reg = iris_py.FaceRegistry(str(tmp / "faces.jsonl"))
    reg.enroll("Ada", [0.1] * 128)
    assert reg.identify([0.1] * 128) == ("Ada", 0.0)
    assert reg.identify([0.9] * 128) is None
    assert len(iris_py.FaceRegistry(str(tmp / "faces.jsonl"))) == 1

    assert iris_py.parse_money([["20 EURO"], ["5 EURO"]]) == [("EUR", 2000), ("EUR", 500)]
    assert iris_py.parse_money([["7 EURO"]]) == []
    said = iris_py.describe_money([["5 EURO"], ["5 EURO"], ["5 EURO"]])
    assert said == "You have 15 euros: three 5 euro notes.", said

    notes = iris_py.NoteStore(str(tmp / "notes"))
    notes.record("list", "oat milk")
    assert iris_py.NoteStore(str(tmp / "notes")).list("list") == ["oat milk"]
    assert notes.clear("list") == 1


def check_gateway_and_session(tmp):
    gw = iris_py.Gateway(FIXTURES / "fixtures.json", latency_ms=0)
    scene = iris_py.Image.open(FIXTURES / "images" / "scene.pgm")
    assert iris_py.perceive(gw.address, "scene", scene)["caption"] == "A man sitting at a table."

    orch = iris_py.Orchestrator(FIXTURES / "edge.json", gateway=gw.address)
    assert orch.say("hello") is None
    assert "vision server is reachable" in orch.say("iris")
    orch.set_frame(scene)
    text, trace = orch.say_traced("what do you see")
    assert text == "It looks like a man sitting at a table.", text
    assert trace["intent"] == "SceneDescribe" and trace["total_ms"] >= trace["backend_ms"]
    gw.shutdown()

    passed, report = iris_py.run_scenario(FIXTURES / "edge.json", FIXTURES / "scenarios" / "02_scene.txt")
    assert passed, report


def main():
    check_imaging_and_barcode()
    check_router()
    with tempfile.TemporaryDirectory() as d:
        check_faces_money_notes(pathlib.Path(d))
        check_gateway_and_session(pathlib.Path(d))
    print("smoke test ok")


if __name__ == "__main__":
    main()
