import numpy as np
import pytest

from unifi.errors import ArgError, GridError, OrderError
from unifi.grids import Band, FrameType, GridSpec, default_grid, subcarrier_freq_hz
from unifi.types import CsiStream, PacketRecord, QualityMetrics, SanitizedWindow

from conftest import make_packet, make_stream


class TestGridSpec:
    def test_columns_are_band_then_index_sorted(self, small_grid):
        cols = small_grid.columns
        assert cols[0][0] == Band.BAND_2G4
        assert small_grid.size == 13 + 5  # 5g bw20 is a subset of bw80
        assert cols == tuple(sorted(cols, key=lambda c: (c[0].value, c[1])))

    def test_column_of_roundtrip(self, small_grid):
        for j, (band, idx) in enumerate(small_grid.columns):
            assert small_grid.column_of(band, idx) == j

    def test_unknown_layout_rejected(self, small_grid):
        with pytest.raises(GridError):
            small_grid.layout(Band.BAND_2G4, 80)

    def test_json_roundtrip(self, small_grid):
        again = GridSpec.from_json(small_grid.to_json())
        assert again.to_json() == small_grid.to_json()

    def test_non_increasing_layout_rejected(self):
        with pytest.raises(GridError):
            GridSpec({(Band.BAND_5G, 20): (0, 0, 1)})

    def test_default_grid_20mhz_subset_of_80(self):
        g = default_grid()
        assert set(g.layout(Band.BAND_5G, 20)) <= set(g.layout(Band.BAND_5G, 80))

    def test_subcarrier_freqs_increase_with_index(self):
        assert subcarrier_freq_hz(Band.BAND_5G, 4) > subcarrier_freq_hz(Band.BAND_5G, -4)


class TestPacketRecord:
    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ArgError):
            make_packet(0, sc=(0, 1), amp=np.ones(3))

    def test_non_increasing_sc_rejected(self):
        with pytest.raises(ArgError):
            make_packet(0, sc=(2, 1, 3), amp=np.ones(3))

    def test_negative_amp_rejected(self):
        with pytest.raises(ArgError):
            make_packet(0, sc=(0, 1), amp=[1.0, -0.1])

    def test_nonfinite_amp_rejected(self):
        with pytest.raises(ArgError):
            make_packet(0, sc=(0, 1), amp=[1.0, np.inf])

    def test_empty_rejected(self):
        with pytest.raises(ArgError):
            make_packet(0, sc=(), amp=[])

    def test_amp_is_read_only(self):
        p = make_packet(0)
        with pytest.raises(ValueError):
            p.amp[0] = 5.0


class TestCsiStream:
    def test_duration_and_sorting(self, small_grid):
        s = make_stream([make_packet(200), make_packet(100)], small_grid)
        assert [p.t_us for p in s.packets] == [100, 200]
        assert s.duration_us == 100

    def test_unsorted_construction_rejected(self, small_grid):
        with pytest.raises(OrderError):
            CsiStream(epoch_us=0, grid=small_grid,
                      packets=(make_packet(200), make_packet(100)))

    def test_tie_break_by_band_frame_bw(self, small_grid):
        a = make_packet(100, band=Band.BAND_5G, ft=FrameType.MGMT)
        b = make_packet(100, band=Band.BAND_2G4, sc=(-6, -3, 0), amp=np.ones(3))
        s = make_stream([a, b], small_grid)
        assert s.packets[0].band == Band.BAND_2G4

    def test_off_grid_packet_rejected(self, small_grid):
        with pytest.raises(GridError):
            make_stream([make_packet(0, sc=(-4, -2, 1), amp=np.ones(3))], small_grid)

    def test_empty_stream_duration_zero(self, small_grid):
        s = make_stream([], small_grid)
        assert s.duration_us == 0 and len(s) == 0


class TestSanitizedWindow:
    def test_masked_entries_must_be_zero(self):
        with pytest.raises(ArgError):
            SanitizedWindow(0, 1000, np.ones((2, 3)),
                            np.array([[1, 0, 1], [1, 1, 1]]),
                            np.array([0.1, 0.2]))

    def test_every_row_needs_an_observation(self):
        vals = np.zeros((2, 3))
        masks = np.array([[1, 0, 0], [0, 0, 0]])
        with pytest.raises(ArgError):
            SanitizedWindow(0, 1000, vals, masks, np.array([0.1, 0.2]))

    def test_ts_strictly_increasing(self):
        vals = np.ones((2, 1))
        masks = np.ones((2, 1))
        with pytest.raises(ArgError):
            SanitizedWindow(0, 1000, vals, masks, np.array([0.5, 0.5]))

    def test_valid_window(self):
        w = SanitizedWindow(0, 1000, np.array([[0.0, 1.0]]), np.array([[0, 1]]),
                            np.array([0.5]), label=2)
        assert w.n_obs == 1 and w.grid_size == 2 and w.label == 2


class TestQualityMetrics:
    def test_range_checks(self):
        with pytest.raises(ArgError):
            QualityMetrics(mr=1.2, scv=0.0)
        with pytest.raises(ArgError):
            QualityMetrics(mr=0.2, scv=-1.0)
        q = QualityMetrics(mr=0.5, scv=1.5, acv=0.1)
        assert q.to_json() == {"mr": 0.5, "scv": 1.5, "acv": 0.1}
