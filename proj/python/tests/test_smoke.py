import pygbeam
print("ok")
