"""Identity 'codec': copies input to output. Usage: passthrough_codec.py [--bitrate N] IN OUT"""
import shutil
import sys

args = sys.argv[1:]
if args and args[0] == "--bitrate":
    int(args[1])
    args = args[2:]
shutil.copyfile(args[0], args[1])
