"""python -m efi"""

from efi.cli import main

main()
