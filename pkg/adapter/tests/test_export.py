import hashlib
import json

import numpy as np
import pytest
from PIL import Image

from genreg_export.backends import (
    LocalStatsDescriptor,
    ModelUnavailableError,
    PatchGridMatcher,
    get_geo_backend,
    get_matcher,
)
from genreg_export.export import export_geo_features, export_image_features, select_frames
from genreg_export import formats

# The acceptance surface: exports must load in the primary component.
from genreg.features import FeatureField, ViewFeatureStack, l2_normalize_views, read_features
from genreg.correspondence import similarity_img_maxpool

WIDTH, HEIGHT = 48, 36
L = 12  # frames per segment


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    """Synthetic generated-video scene: one camera, two depth segments,
    shaded RGB frames, clouds derived from the depths."""
    root = tmp_path_factory.mktemp("scene")
    rng = np.random.default_rng(17)

    cam = {
        "width": WIDTH,
        "height": HEIGHT,
        "model": "pinhole",
        "fx": 40.0,
        "fy": 40.0,
        "cx": WIDTH / 2.0,
        "cy": HEIGHT / 2.0,
    }
    cam_path = root / "camera.json"
    cam_path.write_text(json.dumps(cam))

    def make_depth(phase):
        v, u = np.mgrid[0:HEIGHT, 0:WIDTH]
        depth = 2.0 + 0.5 * np.sin(u / 7.0 + phase) + 0.3 * np.cos(v / 5.0)
        depth[(u + v) % 9 == 0] = 0.0  # sprinkle invalid pixels
        return np.round(depth, 3)

    depths = {"src": make_depth(0.0), "tgt": make_depth(1.3)}

    frame_paths, depth_paths = [], []
    index = 0
    for segment in ("src", "tgt"):
        depth = depths[segment]
        for frame in range(L):
            shade = (depth / depth.max() * 200).astype(np.uint8)
            wobble = (20 * np.sin(index / 3.0)).astype(np.uint8)
            rgb = np.stack([shade + wobble, shade, 255 - shade], axis=-1).astype(np.uint8)
            fp = root / f"frame_{index:03d}.png"
            Image.fromarray(rgb).save(fp)
            dp = root / f"depth_{index:03d}.png"
            Image.fromarray(np.rint(depth * 1000).astype(np.uint16)).save(dp)
            frame_paths.append(fp)
            depth_paths.append(dp)
            index += 1

    clouds = {}
    for segment in ("src", "tgt"):
        pts, _ = formats.lift_pixels(depths[segment], cam)
        sub = pts[rng.choice(len(pts), 150, replace=False)]
        path = root / f"{segment}.xyz"
        with open(path, "w") as fh:
            for x, y, z in sub:
                fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
        clouds[segment] = path

    return {
        "root": root,
        "camera": cam_path,
        "frames": frame_paths,
        "depths": depth_paths,
        "src_cloud": clouds["src"],
        "tgt_cloud": clouds["tgt"],
    }


def run_export(scene, out_dir, k, safeguard=2, **kw):
    return export_image_features(
        scene["frames"],
        scene["depths"],
        scene["camera"],
        scene["src_cloud"],
        scene["tgt_cloud"],
        k,
        str(out_dir / "img"),
        safeguard=safeguard,
        **kw,
    )


class TestFrameSelection:
    def test_endpoints_included(self):
        idx = select_frames(10, 4)
        assert idx[0] == 0 and idx[-1] == 9
        assert len(idx) == 4

    def test_single_frame(self):
        assert list(select_frames(5, 1)) == [0]

    def test_shortfall(self):
        with pytest.raises(ValueError, match="shortfall"):
            select_frames(3, 4)


class TestImageExport:
    def test_k4_gives_v16_loading_in_primary(self, scene, tmp_path):
        manifest = run_export(scene, tmp_path, k=4)
        assert manifest.k == 4
        stack = read_features(tmp_path / "img_src.fif")
        assert isinstance(stack, ViewFeatureStack)
        assert stack.n_views == 16
        assert stack.k == 4
        assert stack.n == 150
        tgt = read_features(tmp_path / "img_tgt.fif")
        assert tgt.n_views == 16

    def test_header_v_field_is_16(self, scene, tmp_path):
        run_export(scene, tmp_path, k=4)
        blob = (tmp_path / "img_src.fif").read_bytes()
        version, v, n, d = np.frombuffer(blob[4:20], dtype="<u4")
        assert (version, v, n, d) == (1, 16, 150, 24)

    def test_k1_single_view(self, scene, tmp_path):
        manifest = run_export(scene, tmp_path, k=1)
        stack = read_features(tmp_path / "img_src.fif")
        assert stack.n_views == 1
        assert manifest.frame_indices["src"] == [0]

    def test_manifest_consistency(self, scene, tmp_path):
        manifest = run_export(scene, tmp_path, k=3)
        data = json.loads((tmp_path / "img_manifest.json").read_text())
        assert data["K"] == 3
        stack = read_features(tmp_path / "img_src.fif")
        assert stack.n_views == data["K"] ** 2
        assert data["image_resolution"] == [WIDTH, HEIGHT]
        assert len(data["frame_indices"]["src"]) == 3
        assert data["outputs"] == ["img_src.fif", "img_tgt.fif"]

    def test_safeguard_frames_excluded(self, scene, tmp_path):
        safeguard = 3
        manifest = run_export(scene, tmp_path, k=4, safeguard=safeguard)
        split = L
        banned = set(range(split - safeguard, split + safeguard))
        chosen = set(manifest.frame_indices["src"]) | set(manifest.frame_indices["tgt"])
        assert not (chosen & banned)
        assert max(manifest.frame_indices["src"]) < split
        assert min(manifest.frame_indices["tgt"]) >= split

    def test_deterministic_reexport_identical_hash(self, scene, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        run_export(scene, tmp_path / "a", k=2)
        run_export(scene, tmp_path / "b", k=2)
        for name in ("img_src.fif", "img_tgt.fif"):
            ha = hashlib.sha256((tmp_path / "a" / name).read_bytes()).hexdigest()
            hb = hashlib.sha256((tmp_path / "b" / name).read_bytes()).hexdigest()
            assert ha == hb

    def test_frame_count_shortfall(self, scene, tmp_path):
        with pytest.raises(ValueError, match="shortfall"):
            run_export(scene, tmp_path, k=4, safeguard=L - 2)

    def test_stacks_usable_by_primary_pipeline(self, scene, tmp_path):
        run_export(scene, tmp_path, k=2)
        src = l2_normalize_views(read_features(tmp_path / "img_src.fif"))
        tgt = l2_normalize_views(read_features(tmp_path / "img_tgt.fif"))
        sim = similarity_img_maxpool(src, tgt)
        assert np.isfinite(sim.values).all()
        assert sim.values.shape == (150, 150)

    def test_conditioning_differs_across_pairs(self, scene, tmp_path):
        # The same source frame paired with different target frames must
        # yield different descriptor slices (pair-conditioned features).
        run_export(scene, tmp_path, k=2)
        stack = read_features(tmp_path / "img_src.fif").descriptors
        # slices 0 and 1 share source frame 0 but differ in target frame.
        assert not np.array_equal(stack[0], stack[1])

    def test_misaligned_depths_rejected(self, scene, tmp_path):
        with pytest.raises(ValueError, match="must align"):
            export_image_features(
                scene["frames"],
                scene["depths"][:-1],
                scene["camera"],
                scene["src_cloud"],
                scene["tgt_cloud"],
                2,
                str(tmp_path / "img"),
            )


class TestGeoExport:
    def test_default_dim_256_loads_in_primary(self, scene, tmp_path):
        out = tmp_path / "geo.fif"
        manifest = export_geo_features(scene["src_cloud"], out)
        assert manifest.d == 256
        field = read_features(out)
        assert isinstance(field, FeatureField)
        assert field.dim == 256
        assert field.n == 150
        norms = np.linalg.norm(field.descriptors, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)

    def test_empty_cloud_valid_header(self, scene, tmp_path):
        empty = tmp_path / "empty.xyz"
        empty.write_text("")
        out = tmp_path / "geo_empty.fif"
        export_geo_features(empty, out)
        field = read_features(out)
        assert field.n == 0
        assert field.dim == 256

    def test_deterministic(self, scene, tmp_path):
        a = tmp_path / "a.fif"
        b = tmp_path / "b.fif"
        export_geo_features(scene["src_cloud"], a)
        export_geo_features(scene["src_cloud"], b)
        assert a.read_bytes() == b.read_bytes()


class TestCli:
    def test_export_geo_command(self, scene, tmp_path, capsys):
        from genreg_export.cli import main

        out = tmp_path / "geo.fif"
        code = main(["export-geo", str(scene["src_cloud"]), str(out)])
        assert code == 0
        assert "d=256" in capsys.readouterr().out
        assert read_features(out).dim == 256

    def test_export_img_command(self, scene, tmp_path, capsys):
        from genreg_export.cli import main

        frames_dir = tmp_path / "frames"
        depths_dir = tmp_path / "depths"
        frames_dir.mkdir()
        depths_dir.mkdir()
        for p in scene["frames"]:
            (frames_dir / p.name).write_bytes(p.read_bytes())
        for p in scene["depths"]:
            (depths_dir / p.name).write_bytes(p.read_bytes())
        code = main(
            [
                "export-img",
                str(frames_dir),
                str(depths_dir),
                str(scene["camera"]),
                str(scene["src_cloud"]),
                str(scene["tgt_cloud"]),
                str(tmp_path / "img"),
                "--k", "2",
                "--safeguard", "2",
            ]
        )
        assert code == 0
        assert read_features(tmp_path / "img_src.fif").n_views == 4

    def test_unavailable_model_exit_3(self, scene, tmp_path, capsys):
        from genreg_export.cli import main

        code = main(["export-geo", str(scene["src_cloud"]), str(tmp_path / "g.fif"),
                     "--model", "geotransformer"])
        assert code == 3
        assert "geotransformer" in capsys.readouterr().err


class TestBackends:
    def test_external_matcher_unavailable(self):
        with pytest.raises(ModelUnavailableError, match="mast3r"):
            get_matcher("mast3r")

    def test_external_geo_unavailable(self):
        with pytest.raises(ModelUnavailableError, match="geotransformer"):
            get_geo_backend("geotransformer")

    def test_unknown_names_rejected(self):
        with pytest.raises(ValueError, match="unknown matcher"):
            get_matcher("definitely-not-a-model")

    def test_builtin_backends_resolve(self):
        assert isinstance(get_matcher("patch-grid"), PatchGridMatcher)
        assert isinstance(get_geo_backend("local-stats"), LocalStatsDescriptor)

    def test_descriptor_head_dimension_default(self):
        assert PatchGridMatcher().dim == 24
        assert LocalStatsDescriptor().dim == 256
