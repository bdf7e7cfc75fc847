import numpy as np
import pytest

from mvsparse.geometry import BlockGrid, CameraModel


@pytest.fixture
def unit_camera():
    """Identity intrinsics/rotation, center at (0, 0, -10): the ground plane
    sits 10 m in front of the optical axis."""
    return CameraModel(
        camera_id=0,
        intrinsics=np.eye(3),
        rotation=np.eye(3),
        translation=np.array([0.0, 0.0, -10.0]),
        image_size=(1152, 640),
    )


@pytest.fixture
def paper_grid():
    return BlockGrid.for_image(1152, 640, 128)
