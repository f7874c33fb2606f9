__appname__ = "OTFSHybrid"
__version_info__ = (0, 1, 0)  # global application version, major/minor/patch
__version__ = "%i.%i.%i" % __version_info__
__description__ = (
    "Symbol-wise MAP and hybrid MAP/PIC detection for OTFS modulation"
)
__author__ = "OTFSHybrid developers"
__author_email__ = "otfshybrid@users.noreply.github.com"
__copyright__ = (
    "Copyright (c) 2026 OTFSHybrid developers, all rights reserved. see LICENSE file."
)
