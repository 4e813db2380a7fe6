import numpy as np
import pytest

from aneuseg import (ArcAxis, LeakSpec, LineAxis, MarkerSpec, PhantomSpec,
                     RadiusProfile, generate)
from aneuseg.errors import SpecInvalid

from conftest import cylinder_spec


class TestGenerate:
    def test_cylinder_volume_within_2pct(self, cylinder_phantom):
        spec, vol, truth = cylinder_phantom
        length = spec.axis.length
        expect_lumen = np.pi * 8.0 ** 2 * length
        expect_aneurysm = np.pi * 16.0 ** 2 * length
        assert truth.lumen_mask.count() == pytest.approx(expect_lumen,
                                                         rel=0.02)
        assert truth.aneurysm_mask.count() == pytest.approx(expect_aneurysm,
                                                            rel=0.02)

    def test_no_leaks_gives_empty_list(self, cylinder_phantom):
        _, _, truth = cylinder_phantom
        assert truth.leak_masks == []

    def test_seeded_determinism(self):
        spec = cylinder_spec(dims=(48, 48, 48), noise=12.0, seed=99)
        v1, _ = generate(spec)
        v2, _ = generate(spec)
        assert np.array_equal(np.asarray(v1.data), np.asarray(v2.data))
        v3, _ = generate(cylinder_spec(dims=(48, 48, 48), noise=12.0,
                                       seed=100))
        assert not np.array_equal(np.asarray(v1.data), np.asarray(v3.data))

    def test_mask_nesting(self):
        spec = cylinder_spec(
            dims=(48, 48, 48),
            leaks=[LeakSpec(t=0.5, angle=0.3, offset_mm=12.0, radius_mm=3.0)])
        _, truth = generate(spec)
        lumen = truth.lumen_mask.data
        aneurysm = truth.aneurysm_mask.data
        assert np.all(aneurysm[lumen])  # lumen subset of aneurysm
        annulus = aneurysm & ~lumen
        for lm in truth.leak_masks:
            assert np.all(annulus[lm.data])

    def test_noiseless_hu_is_exact(self, cylinder_phantom):
        spec, vol, truth = cylinder_phantom
        data = np.asarray(vol.data)
        assert np.all(data[truth.lumen_mask.data] == spec.hu_lumen)
        annulus = truth.aneurysm_mask.data & ~truth.lumen_mask.data
        assert np.all(data[annulus] == spec.hu_thrombus)

    def test_markers_stamp_metal_on_lumen_surface(self):
        spec = cylinder_spec(
            dims=(48, 48, 48),
            stent_markers=[MarkerSpec(t=0.5, angle=0.0, radius_mm=1.0)])
        vol, truth = generate(spec)
        metal = np.asarray(vol.data) >= spec.hu_metal
        assert metal.any()
        info = truth.marker_info[0]
        center = np.asarray(info["center_xyz"])
        idx = np.argwhere(metal)
        assert np.all(np.linalg.norm(idx - center, axis=1) <= 1.0 + 1e-9)

    def test_leak_volume_matches_analytic(self):
        spec = cylinder_spec(
            dims=(48, 48, 48),
            leaks=[LeakSpec(t=0.5, angle=0.0, offset_mm=12.0, radius_mm=3.0,
                            hu=250.0)])
        _, truth = generate(spec)
        info = truth.leak_info[0]
        assert info["mask_volume_mm3"] == pytest.approx(
            info["analytic_volume_mm3"], rel=0.10)

    def test_bump_metadata(self):
        spec = cylinder_spec(dims=(72, 72, 72))
        spec.outer_radius = RadiusProfile(base=14.0, bump_amplitude=6.0,
                                          bump_center=0.4, bump_width=0.3)
        _, truth = generate(spec)
        assert truth.d_max_mm == pytest.approx(40.0)
        assert truth.d_max_t == pytest.approx(0.4)
        assert truth.d_max_arclength_mm == pytest.approx(
            0.4 * spec.axis.length)

    def test_arc_axis_phantom(self):
        axis = ArcAxis(center=(40, 40, 40), radius=25.0, e1=(1, 0, 0),
                       e2=(0, 0, 1), angle_start=0.0, angle_end=np.pi / 2)
        spec = PhantomSpec(dims=(80, 80, 80), spacing=(1, 1, 1),
                           origin=(0, 0, 0), axis=axis,
                           lumen_radius=RadiusProfile(5.0),
                           outer_radius=RadiusProfile(9.0))
        vol, truth = generate(spec)
        expect = np.pi * 25.0 ** 2 * axis.length
        assert truth.aneurysm_mask.count() * 25.0 ** 2 / 9.0 ** 2 \
            == pytest.approx(expect, rel=0.05)
        # every axis sample classifies as lumen
        data = np.asarray(vol.data)
        for p in truth.axis_points[1:-1:16]:
            idx = tuple(np.rint(p).astype(int))
            assert data[idx] == spec.hu_lumen


class TestSpecValidation:
    def test_gap_violation(self):
        spec = cylinder_spec()
        spec.outer_radius = RadiusProfile(base=9.0)  # 8 + min_gap 2 > 9
        with pytest.raises(SpecInvalid):
            spec.validate()

    def test_hu_ordering(self):
        spec = cylinder_spec()
        spec.hu_lumen = 30.0  # below thrombus
        with pytest.raises(SpecInvalid):
            spec.validate()

    def test_too_small_grid(self):
        spec = cylinder_spec(dims=(24, 24, 48))  # outer radius 16 + margin
        with pytest.raises(SpecInvalid):
            spec.validate()

    def test_round_trip_dict(self):
        spec = cylinder_spec(
            dims=(48, 48, 48), noise=5.0, seed=17,
            stent_markers=[MarkerSpec(0.4, 1.0, 1.0)],
            leaks=[LeakSpec(0.5, 0.2, 12.0, 3.0, 260.0)])
        back = PhantomSpec.from_dict(spec.to_dict())
        assert back.to_dict() == spec.to_dict()
