"""surftrack: learning-free segmentation and tracking on synthetic video.

The pipeline estimates local affine diffeomorphisms between consecutive
frames with a bank of dynamic Gabor receptive fields, classifies region
boundaries as texture edges or occluding edges with border ownership, and
assembles segmentation maps, tracked label maps, and a scene graph from the
verdicts. A separate module provides the two-viewpoint ray-space geometry
kernel (biprojection, vertex recovery, surface forms, egomotion).
"""

__version__ = "0.1.0"
