from apq import benchmark
from apq.simulator import backend_name


def test_backends_compared_and_identical():
    # run() asserts bitwise equality of the two kernels internally
    timings = benchmark.run(customers=20_000, seed=3)
    assert "python" in timings
    if backend_name() == "cython":
        assert "cython" in timings
        assert timings["cython"] < timings["python"]


def test_cli_entry(capsys):
    assert benchmark.main(["--customers", "5000", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "python" in out
