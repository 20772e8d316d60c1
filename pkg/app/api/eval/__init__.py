# TopoFID / inception score command
